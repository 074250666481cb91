import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from v2vchan.fading import (PSI_FLOOR, GammaFadingParams, advance, gamma_pdf,
                            generate_fading_sequence, gudmundson_acf, nakagami_from_gamma,
                            step_gamma_process)


class TestGammaPdf:
    def test_exponential_case(self):
        assert gamma_pdf(0.5, 1, 1) == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_matches_scipy(self):
        x = np.linspace(0.01, 5, 50)
        assert np.allclose(gamma_pdf(x, 1.36, 0.73), stats.gamma(1.36, scale=0.73).pdf(x), rtol=1e-12)

    def test_measured_shape_mean(self):
        assert 1.36 * 0.73 == pytest.approx(0.9928)

    @pytest.mark.parametrize("k,theta", [(1.36, 0.73), (4, 0.25), (0.9, 1 / 0.9), (7.8, 1 / 7.8)])
    def test_normalized(self, k, theta):
        val, _ = integrate.quad(gamma_pdf, 0, np.inf, args=(k, theta), epsabs=1e-12, epsrel=1e-12)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            gamma_pdf(0.0, 1, 1)
        with pytest.raises(ValueError):
            gamma_pdf(1.0, -1, 1)


class TestNakagami:
    def test_rayleigh(self):
        assert nakagami_from_gamma(1, 1) == (1.0, 1.0)

    def test_unit_power(self):
        assert nakagami_from_gamma(4, 0.25) == (4.0, 1.0)

    def test_squared_amplitude_is_gamma(self):
        k, theta = 1.36, 0.73
        m, omega = nakagami_from_gamma(k, theta)
        amp = stats.nakagami(m, scale=math.sqrt(omega)).rvs(100_000, random_state=11)
        assert stats.kstest(amp ** 2, stats.gamma(k, scale=theta).cdf).pvalue > 0.01


class TestAcf:
    def test_values(self):
        assert gudmundson_acf(0.0, 0.25, 0.9) == 0.25
        assert gudmundson_acf(0.9, 0.25, 0.9) == pytest.approx(0.25 / math.e)
        assert gudmundson_acf(-0.9, 0.25, 0.9) == pytest.approx(0.25 / math.e)

    def test_white(self):
        assert np.allclose(gudmundson_acf([0.0, 0.1, 1.0], 2.0, 0.0), [2.0, 0.0, 0.0])


class TestStep:
    def test_zero_increment(self):
        assert step_gamma_process(0.7, 0.0, 4, 0.25, 1.0, 1.3) == 0.7

    def test_hand_value(self):
        expect = (1 * 1 + 4 * 0.25 * 0.1 + 0.25 * 0.1 * (0 - 1) / 2) / 1.1
        assert step_gamma_process(1.0, 0.1, 4, 0.25, 1.0, 0.0) == pytest.approx(expect, rel=1e-14)
        assert step_gamma_process(1.0, 0.1, 4, 0.25, 1.0, 0.0) == pytest.approx(0.98864, abs=1e-5)

    def test_negative_increment(self):
        with pytest.raises(ValueError):
            step_gamma_process(1.0, -0.1, 4, 0.25, 1.0, 0.0)

    def test_floor(self):
        assert step_gamma_process(1e-6, 50.0, 0.5, 0.1, 0.01, -3.0) >= PSI_FLOOR

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, 5), st.floats(1e-3, 0.5), st.floats(0.5, 8), st.floats(0.1, 2))
    def test_conditional_mean_by_quadrature(self, psi, dd, k, dc):
        # E over w ~ N(0,1) via Gauss-Hermite (exact for the polynomial-in-w numerator)
        theta = 1 / k
        x, wts = np.polynomial.hermite_e.hermegauss(12)
        num = (psi * dc + k * theta * dd + theta * dd * (x * x - 1) / 2
               + np.sqrt(2 * psi * theta * dc * dd) * x)
        assume_floor_inactive = np.all(num > PSI_FLOOR * (dd + dc))
        if not assume_floor_inactive:
            return
        mean = np.sum(wts * step_gamma_process(psi, dd, k, theta, dc, x)) / np.sqrt(2 * np.pi)
        assert mean == pytest.approx((psi * dc + k * theta * dd) / (dd + dc), rel=1e-10)

    def test_mean_preserved_at_stationary_mean(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal(400_000)
        out = step_gamma_process(1.0, 0.3, 4.0, 0.25, 1.0, w)
        assert abs(out.mean() - 1.0) < 4 * out.std() / math.sqrt(len(w))

    def test_broadcasting(self):
        out = step_gamma_process(np.ones(3), 0.1, np.array([1.0, 2, 4]), 0.25, 1.0, 0.0)
        assert out.shape == (3,)


class TestSequence:
    def test_zero_increments_constant(self):
        seq = generate_fading_sequence(np.zeros(50), GammaFadingParams(4, 0.25, 1.0), seed=3)
        assert np.all(seq == seq[0])

    def test_deterministic(self):
        p = GammaFadingParams(2, 0.5, 0.5)
        a = generate_fading_sequence(np.full(100, 0.05), p, seed=9)
        b = generate_fading_sequence(np.full(100, 0.05), p, seed=9)
        assert np.array_equal(a, b)

    def test_length_and_positivity(self):
        seq = generate_fading_sequence(np.full(1000, 2.0), GammaFadingParams(0.9, 1 / 0.9, 0.1), seed=1)
        assert len(seq) == 1001 and np.all(seq > 0)

    def test_white_redraw(self):
        seq = generate_fading_sequence([0.1, 0.0, 0.1], GammaFadingParams(1, 1, 0.0), seed=2)
        assert seq[1] != seq[0] and seq[2] == seq[1] and seq[3] != seq[2]

    def test_params_validated(self):
        with pytest.raises(ValueError):
            GammaFadingParams(0, 1, 1)
        with pytest.raises(ValueError):
            GammaFadingParams(1, 1, -1)
        assert GammaFadingParams.unit_mean(4, 1).theta == 0.25

    def test_ensemble_moments(self):
        """Mean and variance over 20 independent seeds, tolerance from the integrated ACF.

        One 1000 m run holds only ~500 independent coherence lengths, so the
        sample mean has sd ~0.022; pooling 20 runs shrinks that to ~0.005.
        """
        p = GammaFadingParams(4, 0.25, 1.0)
        runs = [generate_fading_sequence(np.full(100_000, 0.01), p, seed=s) for s in range(20)]
        means = np.array([r.mean() for r in runs])
        variances = np.array([r.var() for r in runs])
        assert abs(means.mean() - 1.0) < 4 * means.std(ddof=1) / math.sqrt(20)
        assert abs(means.mean() - 1.0) < 0.02
        assert abs(variances.mean() / 0.25 - 1.0) < 0.05

    def test_acf_lag_half_meter(self):
        p = GammaFadingParams(4, 0.25, 1.0)
        r = []
        for s in range(10):
            x = generate_fading_sequence(np.full(100_000, 0.01), p, seed=100 + s)
            y = x - x.mean()
            r.append(np.dot(y[:-50], y[50:]) / np.dot(y, y))
        assert np.mean(r) == pytest.approx(math.exp(-0.5), abs=0.05)


class TestAdvance:
    def test_bank_update(self):
        rng = np.random.default_rng(0)
        psi = np.ones(4)
        k = np.array([1.0, 2.0, 4.0, 1.0])
        out = advance(psi, 0.1, k, 1 / k, np.array([1.0, 1.0, 1.0, 0.0]), rng)
        w = np.random.default_rng(0).standard_normal(4)
        assert np.allclose(out[:3], step_gamma_process(1.0, 0.1, k[:3], 1 / k[:3], 1.0, w[:3]))
        assert out[3] != 1.0

    def test_no_motion_keeps_state(self):
        psi = np.array([0.3, 2.0])
        out = advance(psi, 0.0, np.ones(2), np.ones(2), np.zeros(2), np.random.default_rng(0))
        assert np.array_equal(out, psi)
