import math

import numpy as np
import pytest

from asyncgossip import (
    build_topology,
    consensus_distance,
    laplacian_pinv,
    lyapunov_phi2,
    time_avg_grad_norm,
)
from asyncgossip.metrics import MetricsError, consensus_distance_mean


class TestConsensusDistance:
    def test_matches_projector_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n, d = int(rng.integers(2, 12)), int(rng.integers(1, 6))
            x = rng.standard_normal((n, d))
            pi = np.eye(n) - np.ones((n, n)) / n
            oracle = float(np.linalg.norm(pi @ x) ** 2)
            assert consensus_distance(x) == pytest.approx(oracle, abs=1e-10)

    def test_zero_at_consensus(self):
        x = np.tile(np.array([1.0, -2.0]), (5, 1))
        assert consensus_distance(x) == 0.0

    def test_translation_invariant(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((6, 3))
        shift = rng.standard_normal(3)
        assert consensus_distance(x + shift) == pytest.approx(
            consensus_distance(x), rel=1e-12
        )

    def test_mean_variant(self):
        x = np.array([[0.0], [2.0]])
        assert consensus_distance(x) == pytest.approx(2.0)
        assert consensus_distance_mean(x) == pytest.approx(1.0)

    def test_one_dimensional_input(self):
        assert consensus_distance([0.0, 2.0]) == pytest.approx(2.0)


class TestLyapunovPhi2:
    def setup_method(self):
        self.g = build_topology("ring", 6, ratio=1.0)
        self.pinv = laplacian_pinv(self.g)
        self.rng = np.random.default_rng(3)

    def test_non_negative(self):
        for _ in range(20):
            x = self.rng.standard_normal((6, 3))
            xt = self.rng.standard_normal((6, 3))
            v = lyapunov_phi2(x, xt, np.zeros(3), t=1.0, mu=1.0, gamma=0.01,
                              chi1=2.0, lambda_pinv=self.pinv)
            assert v >= 0.0

    def test_zero_at_optimum_consensus(self):
        x = np.tile(np.array([1.0, 2.0]), (6, 1))
        v = lyapunov_phi2(x, x, np.array([1.0, 2.0]), t=0.5, mu=1.0,
                          gamma=0.1, chi1=1.0, lambda_pinv=self.pinv)
        assert v == pytest.approx(0.0, abs=1e-14)

    def test_schedule_factor_on_frozen_state(self):
        x = self.rng.standard_normal((6, 2))
        xt = self.rng.standard_normal((6, 2))
        args = dict(mu=0.5, gamma=0.02, chi1=2.0, lambda_pinv=self.pinv)
        v0 = lyapunov_phi2(x, xt, np.zeros(2), t=0.0, **args)
        vt = lyapunov_phi2(x, xt, np.zeros(2), t=7.0, **args)
        r = args["mu"] * args["gamma"]
        assert vt / v0 == pytest.approx(math.exp(-r * 7.0), rel=1e-12)

    def test_third_term_ignores_consensus_component(self):
        x = self.rng.standard_normal((6, 2))
        xt = self.rng.standard_normal((6, 2))
        shifted = xt + np.array([5.0, -3.0])   # all-ones direction only
        args = dict(t=1.0, mu=1.0, gamma=0.01, chi1=1.0, lambda_pinv=self.pinv)
        assert lyapunov_phi2(x, xt, np.zeros(2), **args) == pytest.approx(
            lyapunov_phi2(x, shifted, np.zeros(2), **args), rel=1e-12
        )

    def test_requires_optimum(self):
        with pytest.raises(MetricsError):
            lyapunov_phi2(np.zeros((3, 1)), np.zeros((3, 1)), None, 0.0,
                          1.0, 0.1, 1.0, self.pinv)


class TestTimeAvgGradNorm:
    def test_constant_series(self):
        assert time_avg_grad_norm([0.0, 1.0, 3.0], [2.0, 2.0, 2.0]) == (
            pytest.approx(2.0)
        )

    def test_linear_series(self):
        # (1/T) integral of t over [0, 2] = 1.
        assert time_avg_grad_norm([0.0, 2.0], [0.0, 2.0]) == pytest.approx(1.0)

    def test_irregular_grid_matches_manual_trapezoid(self):
        t = np.array([0.0, 0.5, 2.0])
        v = np.array([1.0, 3.0, 0.0])
        manual = (0.5 * (1 + 3) / 2 + 1.5 * (3 + 0) / 2) / 2.0
        assert time_avg_grad_norm(t, v) == pytest.approx(manual)

    def test_single_sample(self):
        assert time_avg_grad_norm([1.0], [5.0]) == 5.0

    def test_rejects_empty_or_degenerate(self):
        with pytest.raises(MetricsError):
            time_avg_grad_norm([], [])
        with pytest.raises(MetricsError):
            time_avg_grad_norm([1.0, 1.0], [0.0, 0.0])
