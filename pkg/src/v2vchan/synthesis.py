"""Channel synthesis: sum the direct path and all scattered paths into H(f, t).

Every scatterer is a single interaction point; its order only selects the
gain/fading parameter class. The direct path uses free-space gain at 1 m and a
knife-edge factor when a building blocks it.
"""

from __future__ import annotations

import hashlib
import json
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from . import SPEED_OF_LIGHT, __version__
from .errors import DataError
from .fading import FadingProcessState, GammaFadingParams, step_gamma_process
from .geometry import (AntennaLayout, IntersectionMap, VehicleTrajectory, antenna_positions,
                       as_point, incidence_angles_vec, los_diffraction_geometry,
                       segments_obstructed)
from .pathgain import (AngularGainParams, angular_gain, average_path_power, foliage_loss,
                       knife_edge_loss, fresnel_nu, legs_foliage_length, los_reference_gain)
from .scatterers import Scatterer, ScattererRealization, substream

SUPPORTED_BAND = (5.2e9, 6.2e9)
PATH_CLASSES = ("LOS", "wall1", "wall2", "wall3", "non_wall", "diffuse")


@dataclass
class PathComponent:
    """One propagation path: the direct path (no scatterer) or a single-bounce path."""

    path_class: str
    scatterer: Optional[Scatterer] = None
    fading_state: FadingProcessState = field(default_factory=lambda: FadingProcessState(1.0))
    initial_phase: float = 0.0

    def __post_init__(self) -> None:
        if self.path_class not in PATH_CLASSES:
            raise ValueError(f"unknown path class {self.path_class!r}")
        if (self.path_class == "LOS") != (self.scatterer is None):
            raise ValueError("only the LOS path has no scatterer")


@dataclass
class ChannelTensor:
    """Complex transfer function over (frequency, time, rx element, tx element)."""

    values: np.ndarray
    freqs: np.ndarray
    times: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.values.ndim != 4:
            raise ValueError(f"channel tensor must be 4-D, got shape {self.values.shape}")
        if self.values.shape[:2] != (len(self.freqs), len(self.times)):
            raise ValueError(f"axis lengths {len(self.freqs)}x{len(self.times)} do not match "
                             f"tensor shape {self.values.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def path_geometry(tx: ArrayLike, scatterer: Optional[Scatterer | ArrayLike], rx: ArrayLike):
    """Length, delay and (for scattered paths) incidence angles of a path.

    Returns ``(d, tau, theta1, theta2)``; the angles are None for the direct path.
    """
    a, b = as_point(tx), as_point(rx)
    if scatterer is None:
        if np.array_equal(a, b):
            raise ValueError("tx and rx coincide")
        d = float(np.hypot(*(b - a)))
        return d, d / SPEED_OF_LIGHT, None, None
    if isinstance(scatterer, Scatterer):
        s, n = as_point(scatterer.location), as_point(scatterer.normal)
    else:
        s, n = as_point(scatterer), None
    if np.array_equal(a, s) or np.array_equal(b, s):
        raise ValueError("scatterer coincides with an antenna")
    d = float(np.hypot(*(a - s)) + np.hypot(*(s - b)))
    th1 = th2 = None
    if n is not None:
        t1, t2 = incidence_angles_vec(a - s, b - s, n)
        th1, th2 = float(t1), float(t2)
    return d, d / SPEED_OF_LIGHT, th1, th2


def path_amplitude(path: PathComponent, tx: ArrayLike, rx: ArrayLike, imap: IntersectionMap,
                   f_ref: float, angular: AngularGainParams = AngularGainParams()) -> complex:
    """Complex path amplitude (without the propagation phase) for one antenna pair."""
    a, b = as_point(tx), as_point(rx)
    lam = SPEED_OF_LIGHT / f_ref
    psi = path.fading_state.psi
    if path.scatterer is None:
        diff = los_diffraction_geometry(a, b, imap.buildings)
        if diff is None:
            d, g_b, poly = float(np.hypot(*(a - b))), 1.0, [a, b]
        else:
            d = diff.d1 + diff.d2 if diff.corner is not None else float(np.hypot(*(a - b)))
            g_b = 10.0 ** (-knife_edge_loss(fresnel_nu(diff.phi, lam, diff.d1, diff.d2)) / 20.0)
            poly = [a, diff.corner, b] if diff.corner is not None else [a, b]
        L_p = _polyline_foliage_loss(poly, imap, f_ref)
        p = average_path_power(d, los_reference_gain(lam), 1.0, g_b, L_p)
    else:
        s = path.scatterer
        d, _, th1, th2 = path_geometry(a, s, b)
        blocked = segments_obstructed(np.array([a, s.location]), np.array([s.location, b]),
                                      imap.buildings)
        if np.any(blocked):
            return 0j
        g_a = angular_gain(th1, th2, angular)
        L_p = _polyline_foliage_loss([a, s.location, b], imap, f_ref)
        p = average_path_power(d, s.G0_db, g_a, 1.0, L_p)
    return complex(np.sqrt(p * psi) * np.exp(1j * path.initial_phase))


def _polyline_foliage_loss(points, imap: IntersectionMap, f_ref: float) -> float:
    if not imap.foliage_areas:
        return 0.0
    pts = np.asarray(points, dtype=float)
    dp = float(np.sum(legs_foliage_length(pts[:-1], pts[1:], imap.foliage_areas)))
    return float(foliage_loss(f_ref, dp))


def transfer_function(amplitudes: ArrayLike, delays: ArrayLike, freqs: ArrayLike,
                      tx_gain: ArrayLike = 1.0, rx_gain: ArrayLike = 1.0) -> np.ndarray:
    """Sum of ``g_l * exp(-j 2 pi f tau_l) * G_tx * G_rx`` over paths, at each frequency."""
    g = np.atleast_1d(np.asarray(amplitudes, dtype=complex))
    tau = np.atleast_1d(np.asarray(delays, dtype=float))
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    w = g * np.broadcast_to(tx_gain, g.shape) * np.broadcast_to(rx_gain, g.shape)
    return np.exp(-2j * np.pi * f[:, None] * tau[None, :]) @ w


def parameter_hash(realization: ScattererRealization, angular: AngularGainParams,
                   los_fading: Optional[GammaFadingParams]) -> str:
    doc = {
        "classes": [vars(c) | {"G0_range": list(c.G0_range), "dc_range": list(c.dc_range),
                               "k_range": list(c.k_range)} for c in realization.classes],
        "angular": vars(angular),
        "los_fading": None if los_fading is None else vars(los_fading),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _path_streams(realization: ScattererRealization, seed: int, n_steps: int):
    """Per-path normal and Gamma redraw sequences, each from its own sub-stream.

    Keying the stream on the scatterer record (not its index) keeps a path's
    fading identical whatever other scatterers are simulated with it.
    """
    P = len(realization)
    W = np.empty((P, n_steps))
    G = np.empty((P, n_steps + 1))
    arr = realization.arrays
    for i, s in enumerate(realization.scatterers):
        key = zlib.crc32(s.location.tobytes() + s.class_name.encode() + np.float64(s.phase).tobytes())
        rng = substream(seed, "path", key)
        G[i] = rng.gamma(arr["k"][i], arr["theta"][i], size=n_steps + 1)
        W[i] = rng.standard_normal(n_steps)
    return W, G


def simulate(imap: IntersectionMap, realization: ScattererRealization,
             traj_tx: VehicleTrajectory, traj_rx: VehicleTrajectory,
             layout_tx: AntennaLayout, layout_rx: AntennaLayout,
             freqs: ArrayLike, times: ArrayLike, seed: int,
             angular: AngularGainParams = AngularGainParams(),
             los_fading: Optional[GammaFadingParams] = None,
             include_los: bool = True,
             f_ref: Optional[float] = None) -> ChannelTensor:
    """Simulate the MIMO transfer function on a frequency x time grid.

    ``los_fading`` enables Gamma fading on the direct path; by default it is
    unfaded. ``f_ref`` (default: grid center) sets the wavelength used for the
    free-space reference gain, the Fresnel parameter and foliage loss.
    """
    f = np.asarray(freqs, dtype=float).ravel()
    t = np.asarray(times, dtype=float).ravel()
    if f.size == 0 or t.size == 0:
        raise ValueError("frequency and time grids must be non-empty")
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be nondecreasing")
    if np.any(f < SUPPORTED_BAND[0]) or np.any(f > SUPPORTED_BAND[1]):
        warnings.warn(f"frequency grid [{f.min() / 1e9:.3f}, {f.max() / 1e9:.3f}] GHz leaves the "
                      f"supported 5.2-6.2 GHz band", stacklevel=2)
    if f_ref is None:
        f_ref = 0.5 * (f.min() + f.max())
    lam = SPEED_OF_LIGHT / f_ref

    xy_tx, hd_tx = traj_tx.sample(t)
    xy_rx, hd_rx = traj_rx.sample(t)
    A_tx = antenna_positions(xy_tx, hd_tx, layout_tx.offsets)     # (T, X, 2)
    A_rx = antenna_positions(xy_rx, hd_rx, layout_rx.offsets)     # (T, R, 2)
    T, X, R, F = len(t), len(layout_tx), len(layout_rx), len(f)
    step = np.hypot(*np.diff(xy_tx, axis=0).T) + np.hypot(*np.diff(xy_rx, axis=0).T)

    arr = realization.arrays
    S, N = arr["location"], arr["normal"]
    P = len(S)
    W, Gdraw = _path_streams(realization, seed, T - 1)
    k, theta, dc = arr["k"], arr["theta"], arr["d_c"]
    psi = Gdraw[:, 0].copy() if P else np.zeros(0)
    amp0 = 10.0 ** (arr["G0_db"] / 20.0)
    ph0 = np.exp(1j * arr["phase"])
    white = dc <= 0
    buildings = imap.buildings

    los_rng = substream(seed, "los")
    los_phase = los_rng.uniform(0.0, 2.0 * np.pi)
    los_psi = 1.0
    los_w = los_g = None
    if los_fading is not None:
        los_g = los_rng.gamma(los_fading.k, los_fading.theta, size=T)
        los_w = los_rng.standard_normal(T)
        los_psi = los_g[0]
    G0_los = los_reference_gain(lam)

    H = np.zeros((F, T, R, X), dtype=complex)
    two_pi_f = -2j * np.pi * f
    uniform = F > 2 and np.allclose(np.diff(f), f[1] - f[0], rtol=1e-9, atol=0.0)
    for u in range(T):
        if u > 0 and step[u - 1] > 0:
            dd = step[u - 1]
            if P:
                new = np.empty(P)
                m = ~white
                new[m] = step_gamma_process(psi[m], dd, k[m], theta[m], dc[m], W[m, u - 1])
                new[white] = Gdraw[white, u]
                psi = new
            if los_fading is not None:
                if los_fading.d_c > 0:
                    los_psi = float(step_gamma_process(los_psi, dd, los_fading.k, los_fading.theta,
                                                       los_fading.d_c, los_w[u]))
                else:
                    los_psi = los_g[u]

        at, ar = A_tx[u], A_rx[u]
        if include_los:
            for r in range(R):
                for x in range(X):
                    g, tau, dep, arr_dir = _los_term(at[x], ar[r], imap, lam, f_ref, G0_los)
                    if g == 0:
                        continue
                    g = g * np.sqrt(los_psi) * np.exp(1j * los_phase)
                    g *= layout_tx.elements[x].gain(np.arctan2(dep[1], dep[0]) - hd_tx[u])
                    g *= layout_rx.elements[r].gain(np.arctan2(arr_dir[1], arr_dir[0]) - hd_rx[u])
                    H[:, u, r, x] += g * np.exp(two_pi_f * tau)
        if P == 0:
            continue

        # legs between every antenna and every scatterer
        vt = S[:, None, :] - at[None, :, :]                       # (P, X, 2) tx -> s
        vr = S[:, None, :] - ar[None, :, :]                       # (P, R, 2) rx -> s
        dt = np.hypot(vt[..., 0], vt[..., 1])
        dr = np.hypot(vr[..., 0], vr[..., 1])
        if buildings:
            Sx = np.repeat(S, X, axis=0)
            Sr = np.repeat(S, R, axis=0)
            # one batched test for both leg sets; leg direction does not matter
            blk = segments_obstructed(np.concatenate([np.tile(at, (P, 1)), np.tile(ar, (P, 1))]),
                                      np.concatenate([Sx, Sr]), buildings)
            vis_t = ~blk[:P * X].reshape(P, X)
            vis_r = ~blk[P * X:].reshape(P, R)
        else:
            vis_t = np.ones((P, X), dtype=bool)
            vis_r = np.ones((P, R), dtype=bool)
        live = np.any(vis_t, axis=1) & np.any(vis_r, axis=1)
        if not np.any(live):
            continue
        idx = np.flatnonzero(live)
        n_l = N[idx]
        th1, _ = incidence_angles_vec(-vt[idx], np.zeros_like(vt[idx]), n_l[:, None, :])
        _, th2 = incidence_angles_vec(np.zeros_like(vr[idx]), -vr[idx], n_l[:, None, :])
        g_a = angular_gain(th1[:, None, :], th2[:, :, None], angular)     # (p, R, X)
        d = dt[idx][:, None, :] + dr[idx][:, :, None]
        vis = vis_r[idx][:, :, None] & vis_t[idx][:, None, :]
        mean_amp = amp0[idx][:, None, None] * g_a * vis / np.maximum(d, 1.0)
        if imap.foliage_areas:
            fp_t = legs_foliage_length(np.tile(at, (len(idx), 1)), np.repeat(S[idx], X, axis=0),
                                       imap.foliage_areas).reshape(-1, X)
            fp_r = legs_foliage_length(np.repeat(S[idx], R, axis=0), np.tile(ar, (len(idx), 1)),
                                       imap.foliage_areas).reshape(-1, R)
            L_p = foliage_loss(f_ref, fp_t[:, None, :] + fp_r[:, :, None])
            mean_amp = mean_amp * 10.0 ** (-L_p / 20.0)
        c = mean_amp * (np.sqrt(psi[idx]) * ph0[idx])[:, None, None]
        if any(e.pattern is not None for e in layout_tx.elements):
            az = np.arctan2(vt[idx, :, 1], vt[idx, :, 0]) - hd_tx[u]
            gt = np.stack([layout_tx.elements[x].gain(az[:, x]) for x in range(X)], axis=1)
            c = c * gt[:, None, :]
        if any(e.pattern is not None for e in layout_rx.elements):
            az = np.arctan2(vr[idx, :, 1], vr[idx, :, 0]) - hd_rx[u]
            gr = np.stack([layout_rx.elements[r].gain(az[:, r]) for r in range(R)], axis=1)
            c = c * gr[:, :, None]
        tau = d / SPEED_OF_LIGHT
        for r in range(R):
            for x in range(X):
                on = vis[:, r, x]
                if not np.any(on):
                    continue
                H[:, u, r, x] += _phasors(two_pi_f, tau[on, r, x], uniform) @ c[on, r, x]

    meta = {
        "seed": int(seed),
        "map_id": imap.name,
        "parameter_set": parameter_hash(realization, angular, los_fading),
        "realization_seed": realization.rng_seed,
        "n_scatterers": P,
        "f_ref_hz": f_ref,
        "version": __version__,
    }
    return ChannelTensor(H, f, t, meta)


def _phasors(two_pi_f: np.ndarray, tau: np.ndarray, uniform: bool) -> np.ndarray:
    """``exp(two_pi_f[:, None] * tau[None, :])``; on a uniform grid via a running product."""
    if not uniform:
        return np.exp(np.outer(two_pi_f, tau))
    E = np.empty((len(two_pi_f), len(tau)), dtype=complex)
    E[0] = np.exp(two_pi_f[0] * tau)
    E[1:] = np.exp((two_pi_f[1] - two_pi_f[0]) * tau)
    return np.cumprod(E, axis=0)


def _los_term(a: np.ndarray, b: np.ndarray, imap: IntersectionMap, lam: float, f_ref: float,
              G0_db: float):
    """Mean amplitude, delay and departure/arrival directions of the direct path."""
    diff = los_diffraction_geometry(a, b, imap.buildings)
    if diff is None:
        d = float(np.hypot(*(b - a)))
        g_b, poly = 1.0, [a, b]
        dep, arr = b - a, a - b
    else:
        if diff.corner is not None:
            d = diff.d1 + diff.d2
            poly = [a, diff.corner, b]
            dep, arr = diff.corner - a, diff.corner - b
        else:
            d = float(np.hypot(*(b - a)))
            poly = [a, b]
            dep, arr = b - a, a - b
        g_b = 10.0 ** (-knife_edge_loss(fresnel_nu(diff.phi, lam, diff.d1, diff.d2)) / 20.0)
    L_p = _polyline_foliage_loss(poly, imap, f_ref)
    g = np.sqrt(average_path_power(d, G0_db, 1.0, g_b, L_p))
    return g, d / SPEED_OF_LIGHT, dep, arr
