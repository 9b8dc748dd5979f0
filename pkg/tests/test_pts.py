import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptspinn.models import ConfigError
from ptspinn.pts import TAU_MAX, TAU_MIN, PtsState, Shrink, estimate_tau_hat, gamma_from_progress, shrink_factor, update_tau


class TestShrink:
    def test_no_reduction(self):
        assert shrink_factor(3.0, 3.0) == 1.0

    def test_full_reduction(self):
        assert shrink_factor(1.0, 1e-7) == pytest.approx(0.1, abs=1e-15)

    def test_midpoint(self):
        assert gamma_from_progress(0.5, 0.1) == pytest.approx(0.55, abs=1e-15)
        # log10 reduction of 4 sits halfway between 2 and 6
        assert shrink_factor(1.0, 1e-4, eps=0.0) == pytest.approx(0.55, abs=1e-12)

    def test_monotone_on_grid(self):
        g = [gamma_from_progress(p) for p in np.linspace(-0.5, 1.5, 1000)]
        assert np.all(np.diff(g) <= 0)
        assert min(g) >= 0.1 and max(g) <= 1.0

    def test_bad_shrink(self):
        with pytest.raises(ConfigError):
            Shrink(start=6, end=2)
        with pytest.raises(ConfigError):
            Shrink(gamma_min=0.0)


class TestEstimator:
    def test_linear_residual(self):
        du = np.random.default_rng(0).normal(size=50)
        assert estimate_tau_hat(du, 4.0 * du, 0.8, eps=0.0) == pytest.approx(0.2, rel=1e-15)

    def test_zero_increment(self):
        assert estimate_tau_hat(np.zeros(5), np.zeros(5), 1.0) == 0.0

    def test_heat_operator(self):
        n = 64
        dx = 1.0 / (n + 1)
        lap = (np.diag(-2 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / dx**2
        J = -lap
        rng = np.random.default_rng(1)
        for _ in range(20):
            v = rng.normal(size=n)
            v /= np.linalg.norm(v)
            tau = estimate_tau_hat(v, J @ v, 0.7)
            assert abs(tau * np.linalg.norm(J @ v) - 0.7) < 1e-6

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            estimate_tau_hat(np.ones(3), np.ones(4), 1.0)


class TestUpdate:
    def test_full_replacement(self):
        s = PtsState.adaptive(1, beta=1.0, freq=10)
        assert update_tau(s, 20, [0.37]).tau == (0.37,)

    def test_off_schedule(self):
        s = PtsState.adaptive(2, freq=10)
        assert update_tau(s, 21, [5.0, 5.0]) is s

    def test_fixed_never_changes(self):
        s = PtsState.fixed(0.1, 3)
        assert update_tau(s, 1000, [1.0, 2.0, 3.0]).tau == (0.1, 0.1, 0.1)

    def test_defaults(self):
        s = PtsState.adaptive()
        assert (s.tau, s.freq, s.shrink.start, s.shrink.end, s.shrink.gamma_min) == ((1.0,), 1000, 2.0, 6.0, 0.1)

    def test_ema(self):
        s = PtsState.adaptive(1, beta=0.25, freq=1)
        assert update_tau(s, 1, [3.0]).tau[0] == pytest.approx(0.75 * 1.0 + 0.25 * 3.0)

    def test_nonfinite_skipped(self, caplog):
        s = PtsState.adaptive(2, freq=1)
        with caplog.at_level(logging.WARNING):
            out = update_tau(s, 1, [math.nan, 2.0])
        assert out.tau[0] == 1.0 and out.tau[1] == 1.5
        assert "nonfinite" in caplog.text

    def test_k_zero_rejected(self):
        with pytest.raises(ValueError):
            update_tau(PtsState.adaptive(), 0, [1.0])

    @pytest.mark.parametrize("tau", [0.0, -1.0, math.inf])
    def test_invalid_tau(self, tau):
        with pytest.raises(ConfigError):
            PtsState.fixed(tau)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.sampled_from([0.0, math.inf, math.nan, 1e-300, 1e300, 0.5, 3.0]), min_size=1, max_size=30), st.floats(0.01, 1.0))
    def test_positive_and_clamped(self, hats, beta):
        s = PtsState.adaptive(1, beta=beta, freq=1)
        for k, h in enumerate(hats, start=1):
            s = update_tau(s, k, [h])
            assert TAU_MIN <= s.tau[0] <= TAU_MAX

    @pytest.mark.parametrize("tau", [0.01, 0.1, 1.0, 10.0, 100.0])
    def test_fixed_grid(self, tau):
        s = PtsState.fixed(tau)
        for k in range(1, 3001, 500):
            s = update_tau(s, k, [123.0])
        assert s.tau == (tau,)
