"""Acceptance gate: one test per criterion, each at its stated tolerance and runtime bound.

Every test records a PASS/FAIL line (shown in the pytest terminal summary)
before asserting, so a red criterion still reports its measured values.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

import _acceptance_log
from _scenarios import (BOUNDS, PLANTED, canyon_intersection, canyon_trajectories,
                        planted_track)
from v2vchan import SPEED_OF_LIGHT
from v2vchan.estimation import estimate_coherence_distance, fit_gamma_fading, ransac_subpaths
from v2vchan.fading import GammaFadingParams, generate_fading_sequence
from v2vchan.geometry import (AntennaLayout, BuildingPolygon, IntersectionMap, VehicleTrajectory,
                              WallSegment, segments_obstructed)
from v2vchan.metrics import (ImpulseResponse, NoiseModel, PowerDelayProfile, condensed_metrics,
                             doppler_resolved_ir, impulse_response, pdp, rms_delay_spread,
                             thresholded)
from v2vchan.pathgain import AngularGainParams, angular_gain, knife_edge_loss
from v2vchan.scatterers import DEFAULT_CLASSES, ScattererClass, ScattererRealization, realize_scatterers
from v2vchan.synthesis import simulate

# committed before any result was seen; never tuned
GAMMA_PROCESS_SEED = 20261015


class Gate:
    """Times a criterion and records its verdict."""

    def __init__(self, number, title, limit_s):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.checks: list[tuple[str, bool]] = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def check(self, label, ok):
        self.checks.append((label, bool(ok)))

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        self.check(f"runtime {elapsed:.2f}s < {self.limit_s:g}s", elapsed < self.limit_s)
        ok = exc_type is None and all(v for _, v in self.checks)
        detail = "; ".join(f"{'ok' if v else 'FAILED'}: {lbl}" for lbl, v in self.checks)
        if exc_type is not None:
            detail += f"; error: {exc_type.__name__}: {exc}"
        line = f"criterion {self.number} {'PASS' if ok else 'FAIL'} [{self.title}] {detail}"
        _acceptance_log.LINES.append(line)
        print(line)
        if exc_type is None:
            failed = [lbl for lbl, v in self.checks if not v]
            assert not failed, f"criterion {self.number} failed: {failed}"
        return False


def test_criterion_1_knife_edge_constants():
    with Gate(1, "knife-edge constants", 1.0) as g:
        below = knife_edge_loss(np.array([np.nextafter(-0.7, -1), -0.7 - 1e-9, -1.0, -5.0]))
        g.check(f"L_d(-0.7-) = {below.max()} dB exactly 0", np.all(below == 0.0))
        L0 = knife_edge_loss(0.0)
        g.check(f"L_d(0) = {L0:.5f} dB within 6.03 +/- 0.01", abs(L0 - 6.03) <= 0.01)
        nu = np.linspace(-3.0, 10.0, 10_000)
        steps = np.diff(knife_edge_loss(nu))
        g.check(f"monotone on 1e4 grid (min step {steps.min():.3g})", np.all(steps >= 0))


def _log_slope(theta1, theta2, s, p):
    y = np.log(angular_gain(theta1, theta2, p))
    return np.polyfit(s, y, 1)[0]


def test_criterion_2_angular_gain():
    p = AngularGainParams(12.0, 0.35, 1.22)
    with Gate(2, "angular gain", 1.0) as g:
        rng = np.random.default_rng(2)
        pts = np.empty((0, 2))
        while len(pts) < 10_000:
            c = rng.uniform(-p.dtheta2, p.dtheta2, (20_000, 2))
            pts = np.vstack([pts, c[np.abs(c[:, 0] - c[:, 1]) <= p.dtheta1]])
        pts = pts[:10_000]
        ga = angular_gain(pts[:, 0], pts[:, 1], p)
        g.check("g_a = 1 on 1e4 active-set points", np.all(ga == 1.0))
        anywhere = angular_gain(*rng.uniform(-np.pi, np.pi, (2, 100_000)), p)
        g.check(f"g_a <= 1 everywhere (max {anywhere.max()})", np.all(anywhere <= 1.0))
        s = np.linspace(0.01, 0.5, 50)
        # specular-deviation ray: only |theta1 - theta2| exceeds its threshold
        k1 = _log_slope(p.dtheta1 + s, np.zeros_like(s), s, p)
        # grazing ray: only |theta1| exceeds its threshold
        s2 = np.linspace(0.005, 0.1, 50)
        k2 = _log_slope(p.dtheta2 + s2, np.full_like(s2, 1.0), s2, p)
        for name, k in (("specular", k1), ("grazing", k2)):
            g.check(f"{name} log-slope {k:.4f} within -12 +/- 1%", abs(k + 12.0) <= 0.12)


def test_criterion_3_gamma_process():
    k, theta, dc, dd, n = 4.0, 0.25, 1.0, 0.01, 100_000
    with Gate(3, "Gamma process", 10.0) as g:
        x = generate_fading_sequence(np.full(n, dd), GammaFadingParams(k, theta, dc),
                                     seed=GAMMA_PROCESS_SEED)
        m, v = float(np.mean(x)), float(np.var(x))
        g.check(f"mean {m:.4f} within 1 +/- 0.02", abs(m - 1.0) <= 0.02)
        g.check(f"variance {v:.4f} within 0.25 +/- 5%", abs(v - 0.25) <= 0.05 * 0.25)
        # samples 5 coherence distances apart are effectively independent
        thin = x[::500]
        ks = stats.kstest(thin, stats.gamma(k, scale=theta).cdf)
        g.check(f"KS p = {ks.pvalue:.3f} > 0.01 ({len(thin)} thinned samples)", ks.pvalue > 0.01)
        y = x - m
        lags = np.arange(int(round(2.0 / dd)) + 1)
        acf = np.array([np.dot(y[:len(y) - L], y[L:]) for L in lags]) / np.dot(y, y)
        dev = np.max(np.abs(acf - np.exp(-lags * dd / dc)))
        g.check(f"ACF max deviation {dev:.4f} <= 0.05 up to 2 m", dev <= 0.05)


def test_criterion_4_fading_fit_round_trip():
    with Gate(4, "fading fit round trip", 10.0) as g:
        samples = np.random.default_rng(4).gamma(1.36, 0.73, 10_000)
        k_hat = fit_gamma_fading(samples).k
        g.check(f"k_hat {k_hat:.4f} within 1.36 +/- 10%", abs(k_hat - 1.36) <= 0.136)
        psi = generate_fading_sequence(np.full(40_000, 0.05), GammaFadingParams.unit_mean(1.36, 0.9),
                                       seed=4)
        dc = estimate_coherence_distance(np.arange(40_001) * 0.05, psi)
        g.check(f"d_c_hat {dc:.4f} m within 0.9 +/- 0.2 m", abs(dc - 0.9) <= 0.2)


def test_criterion_5_ransac():
    import inspect
    with Gate(5, "RANSAC planted scatterers", 60.0) as g:
        hits, disjoint = 0, True
        for seed in range(100):
            track, _ = planted_track(sigma=0.05, seed=seed)
            res = ransac_subpaths(track, J=2, bounds=BOUNDS, seed=seed)
            found = np.array([sp.scatter_points[0] for sp in res]) if len(res) else np.empty((0, 2))
            ok = len(found) == 2 and all(np.min(np.linalg.norm(found - p, axis=1)) <= 0.5
                                         for p in PLANTED)
            hits += ok
            sets = [set(sp.inlier_indices.tolist()) for sp in res]
            disjoint &= all(not (a & b) for i, a in enumerate(sets) for b in sets[i + 1:])
        g.check(f"{hits}/100 trials recover both within 0.5 m (need >= 95)", hits >= 95)
        g.check("inlier sets disjoint in every trial", disjoint)
        d = {k: v.default for k, v in inspect.signature(ransac_subpaths).parameters.items()}
        g.check("defaults 0.3/0.45 m, 500 iters, 0.05n, min 10",
                (d["inner_thresh"], d["final_thresh"], d["iters"], d["min_frac"], d["min_points"])
                == (0.3, 0.45, 500, 0.05, 10))


def _static(xy):
    return VehicleTrajectory(np.array([0.0, 1.0]), np.array([xy, xy], float), np.zeros(2))


def test_criterion_6_los_oracle():
    empty = ScattererRealization((), 0)
    one = AntennaLayout()
    f = 5.9e9
    lam = SPEED_OF_LIGHT / f
    with Gate(6, "LOS oracles", 5.0) as g:
        worst = 0.0
        for d in (1.0, 7.3, 40.0, 250.0):
            h = simulate(IntersectionMap(), empty, _static((0, 0)), _static((d, 0)), one, one, [f],
                         [0.0], seed=0).values[0, 0, 0, 0]
            worst = max(worst, abs(20 * np.log10(abs(h)) - 20 * np.log10(lam / (4 * np.pi * d))))
        g.check(f"Friis max error {worst:.2e} dB <= 0.01", worst <= 0.01)
        # one building corner at the origin between the two vehicles
        b = BuildingPolygon([(0, 0), (0, 60), (-60, 60), (-60, 0)])
        tx, rx, c = np.array([-10.0, -3.0]), np.array([3.0, 10.0]), np.zeros(2)
        h = simulate(IntersectionMap(buildings=[b]), empty, _static(tx), _static(rx), one, one, [f],
                     [0.0], seed=0).values[0, 0, 0, 0]
        d1, d2 = np.linalg.norm(c - tx), np.linalg.norm(rx - c)
        phi = math.acos(np.dot(c - tx, rx - c) / (d1 * d2))
        nu = phi * math.sqrt(2.0 / (lam * (1.0 / d1 + 1.0 / d2)))
        L_d = 6.9 + 20 * math.log10(math.sqrt((nu - 0.1) ** 2 + 1) + nu - 0.1)
        expect = 20 * math.log10(lam / (4 * math.pi * (d1 + d2))) - L_d
        err = abs(20 * np.log10(abs(h)) - expect)
        g.check(f"corner attenuation error {err:.2e} dB <= 0.01 (L_d {L_d:.2f} dB)", err <= 0.01)


def test_criterion_7_metrics_oracles():
    rng = np.random.default_rng(7)
    with Gate(7, "metrics oracles", 5.0) as g:
        F, T = 16, 12
        H = rng.standard_normal((F, T)) + 1j * rng.standard_normal((F, T))
        from v2vchan.synthesis import ChannelTensor
        ten = ChannelTensor(H[:, :, None, None], 5.7e9 + np.arange(F) * 1e6, np.arange(T) * 1e-3, {})
        h = impulse_response(ten)
        got = pdp(h, 3, 5).powers
        brute = np.zeros(F)
        for kk in range(F):
            for u in range(3, 8):
                v = sum(H[m, u] * np.exp(2j * np.pi * m * kk / F) for m in range(F)) / F
                brute[kk] += abs(v) ** 2 / 5
        rel = np.max(np.abs(got - brute) / np.abs(brute))
        g.check(f"PDP vs brute force rel {rel:.2e} <= 1e-12", rel <= 1e-12)
        tau = np.arange(64) * 10e-9
        p = np.zeros(64)
        p[[5, 21]] = 0.37
        ds = rms_delay_spread(PowerDelayProfile(0.0, tau, p, 1))
        delta = tau[21] - tau[5]
        g.check(f"equal two-path RMS-DS {ds!r} == delta/2 {delta / 2!r}", ds == delta / 2)
        noise = NoiseModel(1e-12, 5.0)
        powers = 10 ** rng.uniform(-13, -10, 200)
        kept = thresholded(PowerDelayProfile(0.0, np.arange(200.0), powers, 1), noise).powers
        thr = 1e-12 * 10 ** 0.5
        g.check("thresholding drops exactly the sub-(floor + 5 dB) bins",
                np.array_equal(kept > 0, powers >= thr) and np.array_equal(kept[kept > 0],
                                                                           powers[powers >= thr]))
        hv = rng.standard_normal((8, 40)) + 1j * rng.standard_normal((8, 40))
        ir = ImpulseResponse(hv, np.arange(8) * 1e-8, np.arange(40) * 1e-3)
        dop = doppler_resolved_ir(ir, (0.0, 0.04))
        e_t, e_nu = np.sum(np.abs(hv) ** 2), np.sum(np.abs(dop.values) ** 2)
        g.check(f"Doppler Parseval rel {abs(e_t - e_nu) / e_t:.2e} <= 1e-10",
                abs(e_t - e_nu) <= 1e-10 * e_t)


def test_criterion_8_scatterer_statistics():
    cls = ScattererClass("wall1", "wall", 1, 0.044, 3.0, (-65, -48), (1, 2), (2, 8))
    imap = IntersectionMap(walls=[WallSegment((0, 0), (100, 0), (0, 1))])
    with Gate(8, "scatterer statistics", 30.0) as g:
        counts, xs, ys = [], [], []
        for seed in range(500):
            r = realize_scatterers(imap, [cls], seed)
            counts.append(len(r))
            if len(r):
                loc = r.arrays["location"]
                xs.append(loc[:, 0])
                ys.append(loc[:, 1])
        counts = np.array(counts)
        se = math.sqrt(13.2 / 500)
        g.check(f"mean count {counts.mean():.3f} within 3 SE ({3 * se:.3f}) of 13.2",
                abs(counts.mean() - 13.2) <= 3 * se)
        x, y = np.concatenate(xs), np.concatenate(ys)
        cells, _, _ = np.histogram2d(x, y, bins=[10, 3], range=[[0, 100], [0, 3]])
        chi = stats.chisquare(cells.ravel())
        g.check(f"uniformity chi-square p = {chi.pvalue:.3f} > 0.01 ({len(x)} points)",
                chi.pvalue > 0.01 and len(x) == counts.sum())


CANYON_FREQS = 5.7e9 + (np.arange(64) - 32) * 0.78e6
CANYON_DT = 0.01
CANYON_DURATION = 6.0


def _canyon_gain(imap, tx, rx, seed):
    real = realize_scatterers(imap, DEFAULT_CLASSES, seed)
    times = np.arange(0.0, CANYON_DURATION + 1e-9, CANYON_DT)
    ten = simulate(imap, real, tx, rx, AntennaLayout(), AntennaLayout(), CANYON_FREQS, times, seed)
    rows = condensed_metrics(ten)
    return np.array([r.t_a for r in rows]), np.array([r.gain_db for r in rows])


@pytest.mark.slow
def test_criterion_9_end_to_end_intersection():
    imap = canyon_intersection()
    tx, rx = canyon_trajectories(CANYON_DURATION)
    with Gate(9, "end-to-end intersection", 600.0) as g:
        ens = []
        for seed in range(100):
            t_a, gain = _canyon_gain(imap, tx, rx, seed)
            ens.append(gain)
        ens = np.array(ens)
        _, held = _canyon_gain(imap, tx, rx, 100_000)
        lo, hi = ens.min(axis=0), ens.max(axis=0)
        inside = float(np.mean((held >= lo) & (held <= hi)))
        g.check(f"held-out inside 100-run envelope for {100 * inside:.1f}% of windows (need >= 95%)",
                inside >= 0.95)
        a, _ = tx.sample(t_a)
        b, _ = rx.sample(t_a)
        los = ~segments_obstructed(a, b, imap.buildings)
        g.check(f"{los.sum()} LOS and {(~los).sum()} NLOS windows", los.any() and (~los).any())
        peak, nlos_med = float(held[los].max()), float(np.median(held[~los]))
        g.check(f"NLOS median {nlos_med:.1f} dB is {peak - nlos_med:.1f} dB below LOS peak "
                f"{peak:.1f} dB (need >= 20)", peak - nlos_med >= 20.0)
