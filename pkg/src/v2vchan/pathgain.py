"""Average path power: distance law, angular gain, blockage, diffraction and foliage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .geometry import points_in_polygon, _cross


@dataclass(frozen=True)
class AngularGainParams:
    """Decay rate ``xi`` (1/rad) and the two angular thresholds (rad)."""

    xi: float = 12.0
    dtheta1: float = 0.35
    dtheta2: float = 1.22

    def __post_init__(self) -> None:
        if not self.xi >= 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if not 0 <= self.dtheta1 <= np.pi:
            raise ValueError(f"dtheta1 must lie in [0, pi], got {self.dtheta1}")
        if not 0 <= self.dtheta2 <= np.pi / 2:
            raise ValueError(f"dtheta2 must lie in [0, pi/2], got {self.dtheta2}")


@dataclass(frozen=True)
class PathGainBreakdown:
    d: float
    g0: float
    g_a: float
    g_b: float
    L_p: float
    mean_power: float


def angular_gain(theta1: ArrayLike, theta2: ArrayLike,
                 params: AngularGainParams = AngularGainParams()) -> np.ndarray | float:
    """Angular voltage gain of a scatterer in (0, 1].

    Unity while the bounce is near-specular (``|theta1 - theta2| <= dtheta1``)
    and neither ray is grazing (``|theta| <= dtheta2``); each violated
    threshold adds an exponential decay of rate ``xi`` per radian of excess.
    """
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    excess = (np.maximum(np.abs(t1 - t2) - params.dtheta1, 0.0)
              + np.maximum(np.abs(t1) - params.dtheta2, 0.0)
              + np.maximum(np.abs(t2) - params.dtheta2, 0.0))
    g = np.exp(-params.xi * excess)
    return float(g) if g.ndim == 0 else g


def fresnel_nu(phi: ArrayLike, wavelength: float, d1: ArrayLike, d2: ArrayLike) -> np.ndarray | float:
    """Fresnel-Kirchhoff diffraction parameter for a single knife edge."""
    d1a, d2a = np.asarray(d1, dtype=float), np.asarray(d2, dtype=float)
    if not wavelength > 0 or np.any(d1a <= 0) or np.any(d2a <= 0):
        raise ValueError("wavelength and edge distances must be positive")
    nu = np.asarray(phi, dtype=float) * np.sqrt(2.0 / (wavelength * (1.0 / d1a + 1.0 / d2a)))
    return float(nu) if nu.ndim == 0 else nu


def knife_edge_loss(nu: ArrayLike) -> np.ndarray | float:
    """Knife-edge diffraction loss in dB; zero for nu <= -0.7 and never negative."""
    v = np.asarray(nu, dtype=float)
    w = v - 0.1
    with np.errstate(divide="ignore", invalid="ignore"):
        loss = 6.9 + 20.0 * np.log10(np.sqrt(w * w + 1.0) + w)
    loss = np.where(v > -0.7, np.maximum(loss, 0.0), 0.0)
    return float(loss) if loss.ndim == 0 else loss


def foliage_loss(freq_hz: float, d_p: ArrayLike) -> np.ndarray | float:
    """Penetration loss in dB through ``d_p`` meters of foliage."""
    if not freq_hz > 0:
        raise ValueError("frequency must be positive")
    dp = np.asarray(d_p, dtype=float)
    if np.any(dp < 0):
        raise ValueError("traversal distance must be non-negative")
    loss = 0.2 * (freq_hz * 1e-6) ** 0.3 * dp ** 0.6
    return float(loss) if loss.ndim == 0 else loss


def _polygon_array(areas: Sequence) -> list[np.ndarray]:
    return [np.asarray(a.vertices if hasattr(a, "vertices") else a, dtype=float) for a in areas]


def legs_foliage_length(a: ArrayLike, b: ArrayLike, foliage_areas: Sequence) -> np.ndarray:
    """Length of each segment ``a[i] -> b[i]`` lying inside the union of the areas."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    A, B = np.broadcast_arrays(A, B)
    polys = _polygon_array(foliage_areas)
    if not polys or len(A) == 0:
        return np.zeros(len(A))
    r = B - A
    breaks = [np.zeros((len(A), 1)), np.ones((len(A), 1))]
    for V in polys:
        s = np.roll(V, -1, axis=0) - V
        q = V[None, :, :] - A[:, None, :]
        denom = _cross(r[:, None, :], s[None, :, :])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = _cross(q, s[None, :, :]) / denom
            u = _cross(q, r[:, None, :]) / denom
        ok = (denom != 0) & (t > 0) & (t < 1) & (u >= 0) & (u <= 1)
        breaks.append(np.where(ok, t, np.nan))
    T = np.sort(np.concatenate(breaks, axis=1), axis=1)   # NaNs sort last
    lo, hi = T[:, :-1], T[:, 1:]
    valid = np.isfinite(lo) & np.isfinite(hi) & (hi > lo)
    mid_t = np.where(valid, 0.5 * (lo + hi), 0.0)
    mids = A[:, None, :] + mid_t[..., None] * r[:, None, :]
    flat = mids.reshape(-1, 2)
    inside = np.zeros(len(flat), dtype=bool)
    for V in polys:
        inside |= points_in_polygon(flat, V)
    inside = inside.reshape(mid_t.shape) & valid
    frac = np.sum(np.where(inside, hi - lo, 0.0), axis=1)
    return frac * np.hypot(r[:, 0], r[:, 1])


def foliage_traversal(points: Sequence[ArrayLike], foliage_areas: Sequence) -> float:
    """Total length of the polyline inside the union of the foliage polygons."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("a path needs at least two points")
    return float(np.sum(legs_foliage_length(pts[:-1], pts[1:], foliage_areas)))


def average_path_power(d: ArrayLike, G0_db: ArrayLike, g_a: ArrayLike = 1.0,
                       g_b: ArrayLike = 1.0, L_p: ArrayLike = 0.0) -> np.ndarray | float:
    """Mean path power gain (linear); distances below the 1 m reference are clamped."""
    dd = np.maximum(np.asarray(d, dtype=float), 1.0)
    g0 = 10.0 ** (np.asarray(G0_db, dtype=float) / 20.0)
    p = (g0 * np.asarray(g_a) * np.asarray(g_b) / dd) ** 2 * 10.0 ** (-np.asarray(L_p) / 10.0)
    return float(p) if np.ndim(p) == 0 else p


def path_gain_breakdown(d: float, G0_db: float, g_a: float = 1.0, g_b: float = 1.0,
                        L_p: float = 0.0) -> PathGainBreakdown:
    return PathGainBreakdown(d=float(d), g0=10.0 ** (G0_db / 20.0), g_a=float(g_a), g_b=float(g_b),
                             L_p=float(L_p), mean_power=average_path_power(d, G0_db, g_a, g_b, L_p))


def los_reference_gain(wavelength: float) -> float:
    """Free-space power gain at 1 m in dB."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return float(20.0 * np.log10(wavelength / (4.0 * np.pi)))


def los_blockage_gain(phi: float, wavelength: float, d1: float, d2: float) -> float:
    """Voltage factor ``10**(-L_d/20)`` applied to a diffracted direct path."""
    return float(10.0 ** (-knife_edge_loss(fresnel_nu(phi, wavelength, d1, d2)) / 20.0))


def db(x: ArrayLike) -> np.ndarray | float:
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
