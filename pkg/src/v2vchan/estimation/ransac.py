"""Sub-path decomposition of a delay track by RANSAC over scatterer locations.

A delay track is a set of ``(t_i, d_i)`` observations of propagation distance.
Each sub-path is explained by a chain of ``order`` scatter points, with modelled
distance ``|tx(t) - s_1| + |s_1 - s_2| + ... + |s_o - rx(t)|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from ..errors import DataError
from ..geometry import VehicleTrajectory
from ..scatterers import substream

PositionFn = Callable[[np.ndarray], np.ndarray]

_EPS = 1e-12


@dataclass
class DelayTrack:
    """Distance observations of one multipath group plus the vehicle positions.

    ``tx_pos`` / ``rx_pos`` map an array of times to ``(n, 2)`` positions.
    ``initial_points`` (optional) is the coarse scatterer location from the
    upstream association; when given, LS starts are drawn around it.
    """

    t: np.ndarray
    d: np.ndarray
    tx_pos: PositionFn
    rx_pos: PositionFn
    power: Optional[np.ndarray] = None
    theta1: Optional[np.ndarray] = None
    theta2: Optional[np.ndarray] = None
    initial_points: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float).ravel()
        self.d = np.asarray(self.d, dtype=float).ravel()
        if self.t.shape != self.d.shape:
            raise DataError("track times and distances must have equal length")
        if np.any(np.diff(self.t) < 0):
            raise DataError("track times must be nondecreasing")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.d))):
            raise DataError("track contains non-finite values")

    @classmethod
    def from_trajectories(cls, t: ArrayLike, d: ArrayLike, traj_tx: VehicleTrajectory,
                          traj_rx: VehicleTrajectory, **kw) -> "DelayTrack":
        return cls(t, d, lambda tt: traj_tx.sample(tt)[0], lambda tt: traj_rx.sample(tt)[0], **kw)

    def __len__(self) -> int:
        return len(self.t)

    @cached_property
    def tx_xy(self) -> np.ndarray:
        return np.asarray(self.tx_pos(self.t), dtype=float).reshape(-1, 2)

    @cached_property
    def rx_xy(self) -> np.ndarray:
        return np.asarray(self.rx_pos(self.t), dtype=float).reshape(-1, 2)


@dataclass
class SubpathEstimate:
    order: int
    scatter_points: np.ndarray
    inlier_indices: np.ndarray
    residual_rms: float


@dataclass
class LSFit:
    points: np.ndarray
    cost: float
    converged: bool


@dataclass
class RansacResult:
    subpaths: list[SubpathEstimate]
    leftover_indices: np.ndarray
    stop_reason: str = ""

    def __iter__(self):
        return iter(self.subpaths)

    def __len__(self) -> int:
        return len(self.subpaths)


def modelled_distance(scatter_points: ArrayLike, tx: ArrayLike, rx: ArrayLike) -> np.ndarray | float:
    """Total leg length tx -> s_1 -> ... -> s_o -> rx (``tx``/``rx`` may be ``(n, 2)``)."""
    pts = np.asarray(scatter_points, dtype=float).reshape(-1, 2)
    a = np.asarray(tx, dtype=float)
    b = np.asarray(rx, dtype=float)
    if len(pts) == 0:
        out = np.hypot(*(a - b).T)
    else:
        out = np.hypot(*(a - pts[0]).T) + np.hypot(*(pts[-1] - b).T)
        for p, q in zip(pts[:-1], pts[1:]):
            out = out + np.hypot(*(q - p))
    return float(out) if np.ndim(out) == 0 else out


def _batch_model(X: np.ndarray, TX: np.ndarray, RX: np.ndarray, order: int, jac: bool = True):
    """Modelled distances ``(B, m)`` and Jacobian ``(B, m, 2*order)`` for a batch of chains.

    ``X`` is ``(B, 2*order)``; ``TX``/``RX`` are ``(B, m, 2)``.
    """
    B, m = TX.shape[:2]
    pts = X.reshape(B, order, 2)
    u_first = pts[:, None, 0, :] - TX                         # tx -> s_1, (B, m, 2)
    n_first = np.maximum(np.hypot(u_first[..., 0], u_first[..., 1]), _EPS)
    u_last = pts[:, None, -1, :] - RX                         # rx -> s_o
    n_last = np.maximum(np.hypot(u_last[..., 0], u_last[..., 1]), _EPS)
    f = n_first + n_last
    J = None
    if jac:
        J = np.zeros((B, m, 2 * order))
        J[:, :, 0:2] += u_first / n_first[..., None]
        J[:, :, 2 * order - 2:] += u_last / n_last[..., None]
    for k in range(order - 1):
        v = pts[:, k, :] - pts[:, k + 1, :]                   # (B, 2)
        nv = np.maximum(np.hypot(v[:, 0], v[:, 1]), _EPS)
        f = f + nv[:, None]
        if jac:
            g = (v / nv[:, None])[:, None, :]
            J[:, :, 2 * k:2 * k + 2] += g
            J[:, :, 2 * k + 2:2 * k + 4] -= g
    return f, J


def batch_levenberg_marquardt(X0: np.ndarray, y: np.ndarray, TX: np.ndarray, RX: np.ndarray,
                              order: int, max_iter: int = 200, rtol: float = 1e-9):
    """Minimize ``sum (y - model)^2`` independently for every row of the batch.

    Returns ``(X, cost, converged)``. A row converges once an accepted step
    changes its objective by less than ``rtol`` relative (or the cost is ~0).
    """
    X = np.array(X0, dtype=float)
    B, P = X.shape
    lam = np.full(B, 1e-3)
    f, J = _batch_model(X, TX, RX, order)
    r = y - f
    cost = np.einsum("bm,bm->b", r, r)
    converged = np.zeros(B, dtype=bool)
    scale = np.maximum(np.einsum("bm,bm->b", y, y), 1.0)
    eye = np.eye(P)
    for _ in range(max_iter):
        act = ~converged
        if not np.any(act):
            break
        Ja, ra = J[act], r[act]
        A = np.einsum("bmi,bmj->bij", Ja, Ja)
        g = np.einsum("bmi,bm->bi", Ja, ra)
        diag = np.einsum("bii->bi", A)
        damp = lam[act][:, None, None] * (diag[:, :, None] * eye + 1e-9 * eye)
        try:
            delta = np.linalg.solve(A + damp, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            delta = np.stack([np.linalg.lstsq(a + dm, gg, rcond=None)[0]
                              for a, dm, gg in zip(A, damp, g)])
        Xn = X[act] + delta
        fn, Jn = _batch_model(Xn, TX[act], RX[act], order)
        rn = y[act] - fn
        cn = np.einsum("bm,bm->b", rn, rn)
        better = cn < cost[act]
        idx = np.flatnonzero(act)
        acc = idx[better]
        rel = (cost[acc] - cn[better]) / np.maximum(cost[acc], 1e-300)
        X[acc], f[acc], J[acc], r[acc] = Xn[better], fn[better], Jn[better], rn[better]
        old = cost[acc]
        cost[acc] = cn[better]
        lam[acc] = np.maximum(lam[acc] / 3.0, 1e-12)
        rej = idx[~better]
        lam[rej] *= 4.0
        converged[acc] |= (rel < rtol) | (cost[acc] <= 1e-20 * scale[acc]) | (old - cost[acc] <= 1e-24)
        # a rejected step with huge damping means we are at a (local) minimum
        converged[rej] |= lam[rej] > 1e10
    return X, cost, converged


def default_bounds(track: DelayTrack, order: int, radius: float = 10.0) -> tuple[float, float, float, float]:
    """Search box for random LS starts.

    Around the coarse initial location when one is known; otherwise the box of
    all vehicle positions grown by half the largest observed distance.
    """
    if track.initial_points is not None:
        p = np.asarray(track.initial_points, dtype=float).reshape(-1, 2)
        return (p[:, 0].min() - radius, p[:, 1].min() - radius,
                p[:, 0].max() + radius, p[:, 1].max() + radius)
    pts = np.vstack([track.tx_xy, track.rx_xy])
    grow = 0.5 * float(np.max(track.d)) if len(track) else 0.0
    return (pts[:, 0].min() - grow, pts[:, 1].min() - grow,
            pts[:, 0].max() + grow, pts[:, 1].max() + grow)


def _random_starts(rng: np.random.Generator, bounds, n: int, order: int) -> np.ndarray:
    x0, y0, x1, y1 = bounds
    xs = rng.uniform(x0, x1, size=(n, order))
    ys = rng.uniform(y0, y1, size=(n, order))
    return np.stack([xs, ys], axis=-1).reshape(n, 2 * order)


def fit_scatterer_ls(track: DelayTrack, indices: ArrayLike, order: int = 1,
                     rng: Optional[np.random.Generator] = None, bounds=None,
                     n_starts: int = 5, init: Optional[ArrayLike] = None) -> LSFit:
    """Least-squares scatter chain for a subset of observations, best of several starts."""
    idx = np.asarray(indices, dtype=int).ravel()
    if len(idx) < 2 * order:
        raise ValueError(f"order-{order} fit needs at least {2 * order} observations, got {len(idx)}")
    if init is not None:
        X0 = np.asarray(init, dtype=float).reshape(1, 2 * order)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        X0 = _random_starts(rng, bounds or default_bounds(track, order), n_starts, order)
    B = len(X0)
    TX = np.broadcast_to(track.tx_xy[idx], (B, len(idx), 2))
    RX = np.broadcast_to(track.rx_xy[idx], (B, len(idx), 2))
    y = np.broadcast_to(track.d[idx], (B, len(idx)))
    X, cost, conv = batch_levenberg_marquardt(X0, y, TX, RX, order)
    best = int(np.argmin(cost))
    return LSFit(X[best].reshape(order, 2), float(cost[best]), bool(conv[best]))


def ransac_subpaths(track: DelayTrack, J: Optional[int] = None, order: int = 1,
                    inner_thresh: float = 0.3, final_thresh: float = 0.45, iters: int = 500,
                    min_frac: float = 0.05, min_points: int = 10, sample_size: int = 10,
                    seed: int = 0, bounds=None, n_starts: int = 5) -> RansacResult:
    """Extract up to ``J`` sub-paths from a delay track.

    ``J=None`` runs in automatic mode: sub-paths are extracted until no
    candidate gathers more than ``min_frac`` of all track points or fewer
    than ``min_points`` observations are left.
    """
    n_all = len(track)
    if n_all < min_points:
        raise ValueError(f"RANSAC needs at least {min_points} observations, got {n_all}")
    if J is not None and J < 1:
        raise ValueError("J must be >= 1")
    if sample_size < 2 * order:
        raise ValueError("sample size too small to identify the scatter chain")
    bounds = bounds or default_bounds(track, order)
    tx_all, rx_all, d_all = track.tx_xy, track.rx_xy, track.d
    remaining = np.arange(n_all)
    out: list[SubpathEstimate] = []
    reason = "J reached"
    j = 0
    while True:
        n = len(remaining)
        if n < sample_size:
            reason = "too few points to sample"
            break
        X0, samples = [], []
        for it in range(iters):
            rng = substream(seed, "ransac", j, it)
            samples.append(rng.choice(n, size=sample_size, replace=False))
            X0.append(_random_starts(rng, bounds, n_starts, order))
        samples = np.asarray(samples)                               # (iters, s)
        X0 = np.concatenate(X0)                                      # (iters*n_starts, 2o)
        sel = remaining[np.repeat(samples, n_starts, axis=0)]        # (B, s)
        X, cost, _ = batch_levenberg_marquardt(X0, d_all[sel], tx_all[sel], rx_all[sel], order)
        best_start = np.argmin(cost.reshape(iters, n_starts), axis=1)
        cand = X.reshape(iters, n_starts, -1)[np.arange(iters), best_start]
        # score every candidate against every remaining observation
        TXr = np.broadcast_to(tx_all[remaining], (iters, n, 2))
        RXr = np.broadcast_to(rx_all[remaining], (iters, n, 2))
        model, _ = _batch_model(cand, TXr, RXr, order, jac=False)
        err = np.abs(model - d_all[remaining][None, :])
        inl = err < inner_thresh
        n_in = inl.sum(axis=1)
        res = np.sqrt(np.sum(np.where(inl, err ** 2, 0.0), axis=1) / np.maximum(n_in, 1))
        # the fraction is taken of the whole track, so a handful of stray
        # points left at the end cannot meet it by coincidence
        ok = n_in > min_frac * n_all
        if not np.any(ok):
            reason = "no candidate above the minimum inlier fraction"
            break
        # most inliers, then lowest inlier residual, then earliest iteration
        order_key = np.lexsort((np.arange(iters), res, -n_in))
        best = next(i for i in order_key if ok[i])
        final_in = remaining[err[best] < final_thresh]
        refit = fit_scatterer_ls(track, final_in, order, init=cand[best]) \
            if len(final_in) >= 2 * order else LSFit(cand[best].reshape(order, 2), np.nan, False)
        pts = refit.points
        resid = d_all[final_in] - modelled_distance(pts, tx_all[final_in], rx_all[final_in])
        out.append(SubpathEstimate(order, pts, np.sort(final_in),
                                   float(np.sqrt(np.mean(resid ** 2))) if len(resid) else np.nan))
        remaining = np.setdiff1d(remaining, final_in, assume_unique=True)
        j += 1
        if J is not None and j >= J:
            reason = "J reached"
            break
        if len(remaining) < min_points:
            reason = "fewer than min_points observations left"
            break
    return RansacResult(out, remaining, reason)
