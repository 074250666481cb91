"""Per-path Gamma fading with exponential (Gudmundson) autocorrelation in distance.

The generator discretizes the square-root diffusion

    dPsi = (k*theta - Psi) / d_c * dd + sqrt(2 * theta * Psi / d_c) dW

whose stationary law is Gamma(k, theta) and whose autocorrelation decays as
``exp(-|dd| / d_c)``. The drift is handled implicitly and the diffusion with a
Milstein correction, which keeps the one-step conditional mean exact at the
stationary mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import gammaln

PSI_FLOOR = 1e-12


@dataclass(frozen=True)
class GammaFadingParams:
    k: float
    theta: float
    d_c: float

    def __post_init__(self) -> None:
        if not (self.k > 0 and self.theta > 0):
            raise ValueError(f"Gamma shape and scale must be positive, got k={self.k}, theta={self.theta}")
        if not (self.d_c >= 0 and np.isfinite(self.d_c)):
            raise ValueError(f"coherence distance must be finite and >= 0, got {self.d_c}")

    @classmethod
    def unit_mean(cls, k: float, d_c: float) -> "GammaFadingParams":
        return cls(k, 1.0 / k, d_c)


@dataclass
class FadingProcessState:
    psi: float
    cumulative_distance: float = 0.0


def gamma_pdf(x: ArrayLike, k: float, theta: float) -> np.ndarray | float:
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0) or k <= 0 or theta <= 0:
        raise ValueError("gamma_pdf requires x, k, theta > 0")
    logf = (k - 1.0) * np.log(xa) - xa / theta - gammaln(k) - k * np.log(theta)
    f = np.exp(logf)
    return float(f) if f.ndim == 0 else f


def nakagami_from_gamma(k: float, theta: float) -> tuple[float, float]:
    """Nakagami ``(m, Omega)`` of the amplitude whose power is Gamma(k, theta)."""
    if k <= 0 or theta <= 0:
        raise ValueError("k and theta must be positive")
    return float(k), float(k * theta)


def gudmundson_acf(delta_d: ArrayLike, variance: float, d_c: float) -> np.ndarray | float:
    dd = np.abs(np.asarray(delta_d, dtype=float))
    if d_c < 0:
        raise ValueError("coherence distance must be >= 0")
    if d_c == 0:
        r = np.where(dd == 0, variance, 0.0)
    else:
        r = variance * np.exp(-dd / d_c)
    return float(r) if np.ndim(r) == 0 else r


def step_gamma_process(psi: ArrayLike, delta_d: ArrayLike, k: ArrayLike, theta: ArrayLike,
                       d_c: ArrayLike, w: ArrayLike) -> np.ndarray | float:
    """Advance the fading process by ``delta_d`` meters with standard normal draw ``w``.

    Broadcasts over all arguments, so many independent paths can be stepped at
    once. Results are floored at a tiny positive value.
    """
    psi = np.asarray(psi, dtype=float)
    dd = np.asarray(delta_d, dtype=float)
    if np.any(dd < 0):
        raise ValueError("distance increment must be >= 0")
    k, theta, dc, w = (np.asarray(v, dtype=float) for v in (k, theta, d_c, w))
    num = (psi * dc + k * theta * dd + theta * dd * (w * w - 1.0) / 2.0
           + np.sqrt(2.0 * psi * theta * dc * dd) * w)
    out = np.maximum(num / (dd + dc), PSI_FLOOR)
    return float(out) if out.ndim == 0 else out


def advance(psi: np.ndarray, delta_d: float, k: np.ndarray, theta: np.ndarray, d_c: np.ndarray,
            rng: np.random.Generator) -> np.ndarray:
    """Vectorized one-snapshot update for a bank of paths.

    Paths with ``d_c == 0`` are white: they are redrawn from Gamma(k, theta)
    whenever the vehicles moved.
    """
    w = rng.standard_normal(psi.shape)
    if delta_d == 0:
        return psi.copy()
    white = d_c <= 0
    out = np.empty_like(psi)
    if np.any(~white):
        m = ~white
        out[m] = step_gamma_process(psi[m], delta_d, k[m], theta[m], d_c[m], w[m])
    if np.any(white):
        out[white] = rng.gamma(k[white], theta[white])
    return out


def generate_fading_sequence(increments: Sequence[float] | np.ndarray, params: GammaFadingParams,
                             seed: Optional[int | np.random.Generator] = None) -> np.ndarray:
    """Fading samples at the start point and after each distance increment.

    ``increments[u]`` is the total distance moved by both vehicles between
    samples ``u`` and ``u + 1``; the returned array has ``len(increments) + 1``
    values, the first drawn from the stationary Gamma law.
    """
    inc = np.asarray(increments, dtype=float).ravel()
    if np.any(inc < 0):
        raise ValueError("distance increments must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.empty(len(inc) + 1)
    out[0] = rng.gamma(params.k, params.theta)
    w = rng.standard_normal(len(inc))
    psi = out[0]
    k, th, dc = params.k, params.theta, params.d_c
    if dc == 0:
        redraw = rng.gamma(k, th, size=len(inc))
        for u, dd in enumerate(inc):
            if dd > 0:
                psi = redraw[u]
            out[u + 1] = psi
        return out
    # scalar loop: the recursion is inherently sequential
    for u in range(len(inc)):
        dd = inc[u]
        if dd > 0:
            wu = w[u]
            num = psi * dc + k * th * dd + th * dd * (wu * wu - 1.0) * 0.5 + np.sqrt(2.0 * psi * th * dc * dd) * wu
            psi = max(num / (dd + dc), PSI_FLOOR)
        out[u + 1] = psi
    return out
