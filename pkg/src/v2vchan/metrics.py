"""Condensed channel parameters from simulated or imported transfer functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import SPEED_OF_LIGHT
from .errors import ZeroPowerError
from .synthesis import ChannelTensor

DEFAULT_WINDOW_S = 30e-3
DEFAULT_NOISE_FLOOR_DB = -130.0


@dataclass(frozen=True)
class NoiseModel:
    noise_floor: float = 10.0 ** (DEFAULT_NOISE_FLOOR_DB / 10.0)
    threshold_offset_db: float = 5.0

    def __post_init__(self) -> None:
        if not self.noise_floor >= 0:
            raise ValueError("noise floor must be >= 0")

    @property
    def threshold(self) -> float:
        return self.noise_floor * 10.0 ** (self.threshold_offset_db / 10.0)


@dataclass(frozen=True)
class ImpulseResponse:
    values: np.ndarray          # (delay, time)
    delays: np.ndarray
    times: np.ndarray


@dataclass(frozen=True)
class PowerDelayProfile:
    t_a: float
    delays: np.ndarray
    powers: np.ndarray
    window_N: int


@dataclass(frozen=True)
class DopplerResponse:
    values: np.ndarray          # (doppler, delay)
    doppler: np.ndarray
    delays: np.ndarray


def _uniform_spacing(axis: np.ndarray, what: str) -> float:
    if len(axis) < 2:
        raise ValueError(f"{what} axis needs at least 2 points")
    steps = np.diff(axis)
    step = float(np.mean(steps))
    if step <= 0 or np.max(np.abs(steps - step)) > 1e-6 * abs(step):
        raise ValueError(f"{what} axis must be uniformly spaced")
    return step


def impulse_response(tensor: ChannelTensor, rx: int = 0, tx: int = 0) -> ImpulseResponse:
    """Inverse DFT of H(f, t) over frequency for one antenna pair.

    Delay bin ``k`` is ``k / (N * df)``; a path at delay tau lands in bin
    ``N * df * tau`` (modulo N).
    """
    df = _uniform_spacing(tensor.freqs, "frequency")
    Hf = tensor.values[:, :, rx, tx]
    h = np.fft.ifft(Hf, axis=0)
    delays = np.arange(len(tensor.freqs)) / (len(tensor.freqs) * df)
    return ImpulseResponse(h, delays, tensor.times)


def window_length(dt: float, window_s: float = DEFAULT_WINDOW_S) -> int:
    """Number of snapshots N with N * dt closest to the stationarity window (at least 1)."""
    return max(1, int(round(window_s / dt)))


def window_distance(speed_mps: float, window_s: float = DEFAULT_WINDOW_S) -> float:
    return speed_mps * window_s


def pdp(h: ImpulseResponse | np.ndarray, t_a: int, N: int,
        delays: Optional[np.ndarray] = None, times: Optional[np.ndarray] = None) -> PowerDelayProfile:
    """Mean of ``|h|^2`` over ``N`` snapshots starting at snapshot index ``t_a``."""
    if isinstance(h, ImpulseResponse):
        values, delays, times = h.values, h.delays, h.times
    else:
        values = np.asarray(h)
    if N < 1 or t_a < 0 or t_a + N > values.shape[1]:
        raise ValueError(f"window [{t_a}, {t_a + N}) exceeds the {values.shape[1]} snapshots available")
    powers = np.mean(np.abs(values[:, t_a:t_a + N]) ** 2, axis=1)
    if delays is None:
        delays = np.arange(values.shape[0], dtype=float)
    start = float(times[t_a]) if times is not None else float(t_a)
    return PowerDelayProfile(start, np.asarray(delays, dtype=float), powers, int(N))


def pdp_series(h: ImpulseResponse, N: int) -> list[PowerDelayProfile]:
    """Consecutive non-overlapping PDP windows."""
    return [pdp(h, i, N) for i in range(0, h.values.shape[1] - N + 1, N)]


def mean_delay(profile: PowerDelayProfile) -> float:
    total = float(np.sum(profile.powers))
    if not total > 0:
        raise ZeroPowerError("mean delay undefined for a zero-power profile")
    return float(np.sum(profile.powers * profile.delays) / total)


def rms_delay_spread(profile: PowerDelayProfile) -> float:
    """Power-weighted standard deviation of the delay axis."""
    p, tau = profile.powers, profile.delays
    total = float(np.sum(p))
    if not total > 0:
        raise ZeroPowerError("RMS delay spread undefined for a zero-power profile")
    # centering first avoids cancellation between the two moments
    mu = float(np.sum(p * tau) / total)
    return float(np.sqrt(max(np.sum(p * (tau - mu) ** 2) / total, 0.0)))


def channel_gain(profile: PowerDelayProfile, noise: NoiseModel = NoiseModel()) -> float:
    """Sum of the PDP bins at or above noise floor + threshold offset."""
    p = profile.powers
    return float(np.sum(p[p >= noise.threshold]))


def thresholded(profile: PowerDelayProfile, noise: NoiseModel) -> PowerDelayProfile:
    p = np.where(profile.powers >= noise.threshold, profile.powers, 0.0)
    return PowerDelayProfile(profile.t_a, profile.delays, p, profile.window_N)


def doppler_resolved_ir(h: ImpulseResponse, window: tuple[float, float]) -> DopplerResponse:
    """Unitary DFT over time of the impulse responses inside ``[t_start, t_stop)``.

    No taper is applied. The Doppler axis is centered (fftshift); a path whose
    length shrinks at rate v shows up at ``+v / wavelength``.
    """
    t = np.asarray(h.times)
    t0, t1 = window
    sel = np.flatnonzero((t >= t0) & (t < t1))
    if len(sel) < 2:
        raise ValueError("Doppler window must contain at least 2 snapshots")
    dt = _uniform_spacing(t[sel], "time")
    seg = h.values[:, sel]
    spec = np.fft.fftshift(np.fft.fft(seg, axis=1, norm="ortho"), axes=1)
    nu = np.fft.fftshift(np.fft.fftfreq(len(sel), dt))
    return DopplerResponse(spec.T, nu, h.delays)


def delay_to_distance(delays: np.ndarray) -> np.ndarray:
    return np.asarray(delays) * SPEED_OF_LIGHT


@dataclass(frozen=True)
class MetricRow:
    t_a: float
    gain_db: float
    mean_delay_ns: float
    rms_ds_ns: float


def condensed_metrics(tensor: ChannelTensor, rx: int = 0, tx: int = 0,
                      window_s: float = DEFAULT_WINDOW_S,
                      noise: NoiseModel = NoiseModel()) -> list[MetricRow]:
    """Gain, mean delay and RMS delay spread per stationarity window.

    Delay statistics use the thresholded PDP; windows with no power above the
    threshold report ``-inf`` gain and NaN delays.
    """
    h = impulse_response(tensor, rx, tx)
    dt = _uniform_spacing(tensor.times, "time") if len(tensor.times) > 1 else window_s
    N = min(window_length(dt, window_s), len(tensor.times))
    rows = []
    for prof in pdp_series(h, N):
        clean = thresholded(prof, noise)
        g = channel_gain(prof, noise)
        if g > 0:
            rows.append(MetricRow(prof.t_a, 10 * np.log10(g), mean_delay(clean) * 1e9,
                                  rms_delay_spread(clean) * 1e9))
        else:
            rows.append(MetricRow(prof.t_a, -np.inf, np.nan, np.nan))
    return rows
