"""Maximum-likelihood fits of path-gain, Gamma fading and coherence-distance parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize, minimize_scalar
from scipy.special import digamma, polygamma

from ..errors import UndefinedEstimateError
from ..pathgain import AngularGainParams


@dataclass(frozen=True)
class GammaFit:
    k: float
    theta: float
    mean: float
    degenerate: bool = False


@dataclass(frozen=True)
class PathGainFit:
    G0_db: float
    xi: float
    dtheta1: float
    k: float
    wide_confidence: bool
    n_active: int
    n_decay: int


def _gamma_shape_ml(s: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Solve ``log k - digamma(k) = s`` for k > 0 (s > 0)."""
    # Minka's closed-form start is within a few percent everywhere
    k = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(max_iter):
        f = np.log(k) - digamma(k) - s
        fp = 1.0 / k - polygamma(1, k)
        step = f / fp
        k_new = k - step
        while k_new <= 0:
            step *= 0.5
            k_new = k - step
        if abs(k_new - k) <= tol * k:
            return float(k_new)
        k = k_new
    return float(k)


def fit_gamma_fading(samples: ArrayLike) -> GammaFit:
    """Gamma(k, theta) maximum-likelihood fit; ``mean`` reports k * theta."""
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < 20:
        raise ValueError(f"need at least 20 samples, got {len(x)}")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("Gamma samples must be finite and positive")
    m = float(np.mean(x))
    s = float(np.log(m) - np.mean(np.log(x)))
    if s <= 1e-14:
        return GammaFit(np.inf, 0.0, m, degenerate=True)
    k = _gamma_shape_ml(s)
    return GammaFit(k, m / k, m)


def _excess(th1: np.ndarray, th2: np.ndarray, dtheta1: float, dtheta2: float) -> np.ndarray:
    return (np.maximum(np.abs(th1 - th2) - dtheta1, 0.0)
            + np.maximum(np.abs(th1) - dtheta2, 0.0)
            + np.maximum(np.abs(th2) - dtheta2, 0.0))


def fit_path_gain_params(d: ArrayLike, theta1: ArrayLike, theta2: ArrayLike, power: ArrayLike,
                         dtheta2: float = AngularGainParams().dtheta2,
                         xi_max: float = 40.0) -> PathGainFit:
    """Joint ML estimate of G0 (dB), xi and dtheta1 under Gamma-distributed power.

    With the mean ``mu_i = g0^2 * (g_a(theta_i) / d_i)^2`` the likelihood's
    maximizer in ``g0^2`` is closed form, ``mean(p_i / c_i)``, independent of
    the Gamma shape. The profile over ``(xi, dtheta1)`` is searched on a grid
    and refined with Nelder-Mead; k is then fitted to ``p_i / mu_i``.
    """
    dd = np.maximum(np.asarray(d, dtype=float).ravel(), 1.0)
    t1 = np.asarray(theta1, dtype=float).ravel()
    t2 = np.asarray(theta2, dtype=float).ravel()
    p = np.asarray(power, dtype=float).ravel()
    if not (len(dd) == len(t1) == len(t2) == len(p)):
        raise ValueError("observation arrays must have equal length")
    if len(p) < 10:
        raise ValueError("need at least 10 power observations")
    if np.any(p <= 0):
        raise ValueError("powers must be positive")
    n = len(p)
    base = p * dd ** 2

    def negloglik(xi: float, dt1: float) -> float:
        E = _excess(t1, t2, dt1, dtheta2)
        return n * np.log(np.mean(base * np.exp(2.0 * xi * E))) - 2.0 * xi * np.sum(E)

    xis = np.linspace(0.0, xi_max, 81)
    dts = np.linspace(0.0, np.pi, 181)
    grid = np.array([[negloglik(x, t) for t in dts] for x in xis])
    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    res = minimize(lambda v: negloglik(np.clip(v[0], 0, xi_max), np.clip(v[1], 0, np.pi)),
                   x0=[xis[i], dts[j]], method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 2000})
    xi, dt1 = float(np.clip(res.x[0], 0, xi_max)), float(np.clip(res.x[1], 0, np.pi))
    if res.fun > grid[i, j]:
        xi, dt1 = float(xis[i]), float(dts[j])
    E = _excess(t1, t2, dt1, dtheta2)
    g0sq = np.mean(base * np.exp(2.0 * xi * E))
    mu = g0sq * np.exp(-2.0 * xi * E) / dd ** 2
    k = fit_gamma_fading(p / mu).k if n >= 20 else np.nan
    n_decay = int(np.count_nonzero(np.abs(t1 - t2) > dt1))
    n_active = n - int(np.count_nonzero(E > 0))
    wide = n_decay < 5 or n_active < 5 or xi >= xi_max * 0.999 or dt1 in (0.0, np.pi)
    return PathGainFit(10.0 * np.log10(g0sq), xi, dt1, k, wide, n_active, n_decay)


def sample_acf(x: np.ndarray) -> np.ndarray:
    """Biased sample autocorrelation coefficient of the mean-removed series."""
    y = x - np.mean(x)
    n = len(y)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(y, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[:n]
    return acov / acov[0]


def estimate_coherence_distance(distance: ArrayLike, psi: ArrayLike) -> float:
    """Coherence distance from an exponential fit to the sample ACF.

    Samples are linearly resampled onto a uniform distance grid (median
    spacing); the fit uses lags up to the first zero crossing of the ACF.
    """
    s = np.asarray(distance, dtype=float).ravel()
    y = np.asarray(psi, dtype=float).ravel()
    if len(s) != len(y):
        raise ValueError("distance and fading arrays must have equal length")
    if len(s) < 50:
        raise ValueError(f"need at least 50 samples, got {len(s)}")
    if np.any(np.diff(s) < 0):
        raise ValueError("distances must be nondecreasing")
    steps = np.diff(s)
    pos = steps[steps > 0]
    if len(pos) == 0:
        raise UndefinedEstimateError("all samples at the same distance")
    h = float(np.median(pos))
    # repeated distances collapse to their mean value before resampling
    us, inv = np.unique(s, return_inverse=True)
    uy = np.bincount(inv, weights=y) / np.bincount(inv)
    grid = np.arange(us[0], us[-1] + 0.5 * h, h)
    yg = np.interp(grid, us, uy)
    if np.ptp(yg) == 0:
        raise UndefinedEstimateError("constant fading samples have no autocorrelation")
    r = sample_acf(yg)
    neg = np.flatnonzero(r <= 0)
    z = int(neg[0]) if len(neg) else len(r)
    if z <= 1:
        return 0.0
    lags = np.arange(z) * h
    rr = r[:z]

    def sse(log_dc: float) -> float:
        return float(np.sum((rr - np.exp(-lags / np.exp(log_dc))) ** 2))

    res = minimize_scalar(sse, bounds=(np.log(h * 1e-3), np.log(lags[-1] * 100.0 + h)),
                          method="bounded", options={"xatol": 1e-8})
    return float(np.exp(res.x))
