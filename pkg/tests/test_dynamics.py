import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncgossip import (
    MomentumParams,
    WorkerState,
    grad_step,
    momentum_mix,
    momentum_params,
    pairwise_average,
    step_size_bound,
)
from asyncgossip.dynamics import (
    NON_CONVEX,
    STRONGLY_CONVEX,
    ClockRegressionError,
    DynamicsError,
    mix_coefficients,
)


def expm_series(eta, dt, terms=60):
    """Truncated power series of exp(dt * [[-eta, eta], [eta, -eta]])."""
    A = dt * np.array([[-eta, eta], [eta, -eta]])
    out = np.eye(2)
    term = np.eye(2)
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


finite = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)


class TestMixCoefficients:
    @pytest.mark.parametrize("eta", [0.1, 0.5, 1.0, 3.0])
    @pytest.mark.parametrize("dt", [0.0, 0.05, 0.7, 2.5])
    def test_matches_matrix_exponential_series(self, eta, dt):
        a, b = mix_coefficients(eta, dt)
        M = expm_series(eta, dt)
        # Tolerance covers cancellation in the alternating truncated series.
        assert a == pytest.approx(M[0, 0], abs=1e-9)
        assert b == pytest.approx(M[0, 1], abs=1e-9)

    def test_rows_sum_to_one(self):
        a, b = mix_coefficients(0.7, 1.3)
        assert a + b == pytest.approx(1.0, abs=1e-15)

    def test_array_dt(self):
        a, b = mix_coefficients(0.5, np.array([0.0, 1.0]))
        assert a[0] == pytest.approx(1.0)
        assert b[0] == pytest.approx(0.0)

    @settings(max_examples=50, deadline=None)
    @given(finite, finite, finite)
    def test_semigroup_property(self, eta, dt1, dt2):
        a12, b12 = mix_coefficients(eta, dt1 + dt2)
        a1, b1 = mix_coefficients(eta, dt1)
        a2, b2 = mix_coefficients(eta, dt2)
        # Composition of the two 2x2 symmetric stochastic matrices.
        assert a1 * a2 + b1 * b2 == pytest.approx(a12, abs=1e-12)
        assert a1 * b2 + b1 * a2 == pytest.approx(b12, abs=1e-12)


class TestMomentumParams:
    def test_non_accelerated(self):
        p = momentum_params(4.0, 1.0, accelerated=False)
        assert p == MomentumParams(eta=0.0, alpha=0.5, alpha_tilde=0.5, chi=4.0)

    def test_accelerated_equal_constants(self):
        p = momentum_params(2.0, 2.0, accelerated=True)
        assert p.eta == pytest.approx(0.25)
        assert p.alpha == 0.5
        assert p.alpha_tilde == pytest.approx(0.5)
        assert p.chi == pytest.approx(2.0)

    def test_accelerated_general(self):
        p = momentum_params(4.0, 1.0, accelerated=True)
        assert p.eta == pytest.approx(0.25)
        assert p.alpha_tilde == pytest.approx(1.0)
        assert p.chi == pytest.approx(2.0)
        # Invariant tying the averaging weight to the mixing rate.
        assert p.alpha_tilde / p.eta == pytest.approx(4.0)

    def test_chi_geometric_mean(self):
        p = momentum_params(9.0, 4.0, accelerated=True)
        assert p.chi == pytest.approx(6.0)

    def test_rejects_invalid(self):
        with pytest.raises(DynamicsError):
            momentum_params(0.0, 1.0, True)
        with pytest.raises(DynamicsError):
            momentum_params(1.0, 2.0, True)   # chi2 > chi1 impossible


class TestStepSizeBound:
    def test_strongly_convex(self):
        assert step_size_bound(1.0, 1.0) == pytest.approx(1.0 / 32.0)
        assert step_size_bound(2.0, 3.0, STRONGLY_CONVEX) == pytest.approx(
            1.0 / (16 * 2 * 4)
        )

    def test_non_convex(self):
        assert step_size_bound(1.5, 2.0, NON_CONVEX) == pytest.approx(
            (1 / 48) / (1.5 * 3.0)
        )
        assert step_size_bound(1.0, 1.0, NON_CONVEX, c_nonconvex=0.5) == (
            pytest.approx(0.25)
        )

    def test_rejects_invalid(self):
        with pytest.raises(DynamicsError):
            step_size_bound(0.0, 1.0)
        with pytest.raises(DynamicsError):
            step_size_bound(1.0, 1.0, "mystery")


class TestMomentumMix:
    def test_preserves_pair_sum_and_contracts_difference(self):
        s = WorkerState(x=np.array([2.0, 0.0]), x_tilde=np.array([0.0, 1.0]))
        sum0 = s.x + s.x_tilde
        diff0 = s.x - s.x_tilde
        momentum_mix(s, t_now=0.8, eta=1.3)
        assert np.allclose(s.x + s.x_tilde, sum0, atol=1e-14)
        assert np.allclose(
            s.x - s.x_tilde, diff0 * math.exp(-2 * 1.3 * 0.8), atol=1e-14
        )
        assert s.t_last == 0.8

    def test_eta_zero_only_advances_clock(self):
        s = WorkerState(x=np.array([1.0]), x_tilde=np.array([3.0]))
        momentum_mix(s, 5.0, eta=0.0)
        assert s.x[0] == 1.0 and s.x_tilde[0] == 3.0 and s.t_last == 5.0

    def test_clock_regression_raises(self):
        s = WorkerState.at(np.zeros(2), t=1.0)
        with pytest.raises(ClockRegressionError):
            momentum_mix(s, 0.5, eta=1.0)

    @settings(max_examples=40, deadline=None)
    @given(finite, st.floats(min_value=0.01, max_value=3.0),
           st.floats(min_value=-5, max_value=5), st.floats(min_value=-5, max_value=5))
    def test_converges_to_pair_average(self, dt, eta, u, v):
        s = WorkerState(x=np.array([u]), x_tilde=np.array([v]))
        momentum_mix(s, dt + 30.0 / eta, eta)
        mean = (u + v) / 2
        assert s.x[0] == pytest.approx(mean, abs=1e-10 + 1e-10 * abs(mean))


class TestGradStep:
    def test_shifts_both_halves(self):
        s = WorkerState.at(np.array([1.0, 2.0]))
        grad_step(s, np.array([0.5, -1.0]), gamma=0.1)
        assert np.allclose(s.x, [0.95, 2.1])
        assert np.allclose(s.x_tilde, [0.95, 2.1])

    def test_preserves_difference(self):
        s = WorkerState(x=np.array([1.0]), x_tilde=np.array([4.0]))
        grad_step(s, np.array([2.0]), gamma=0.3)
        assert s.x_tilde[0] - s.x[0] == pytest.approx(3.0)

    def test_rejects_bad_inputs(self):
        s = WorkerState.at(np.zeros(2))
        with pytest.raises(DynamicsError):
            grad_step(s, np.zeros(3), 0.1)
        with pytest.raises(DynamicsError):
            grad_step(s, np.zeros(2), -0.1)


class TestPairwiseAverage:
    def test_alpha_half_sets_both_to_mean(self):
        p = momentum_params(1.0, 1.0, accelerated=False)
        si = WorkerState.at(np.array([2.0]))
        sj = WorkerState.at(np.array([4.0]))
        pairwise_average(si, sj, p)
        assert si.x[0] == pytest.approx(3.0)
        assert sj.x[0] == pytest.approx(3.0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3),
           st.floats(min_value=0.1, max_value=4.0), st.floats(min_value=0.1, max_value=4.0))
    def test_preserves_sums_of_both_halves(self, u, v, chi1, chi2):
        p = momentum_params(max(chi1, chi2), min(chi1, chi2), accelerated=True)
        si = WorkerState(x=np.array([u]), x_tilde=np.array([v]))
        sj = WorkerState(x=np.array([v - 1]), x_tilde=np.array([u + 2]))
        sx = si.x + sj.x
        sxt = si.x_tilde + sj.x_tilde
        pairwise_average(si, sj, p)
        assert np.allclose(si.x + sj.x, sx, atol=1e-12)
        assert np.allclose(si.x_tilde + sj.x_tilde, sxt, atol=1e-12)

    def test_antisymmetric_displacement(self):
        p = momentum_params(4.0, 1.0, accelerated=True)
        si = WorkerState.at(np.array([1.0, 0.0]))
        sj = WorkerState.at(np.array([0.0, 2.0]))
        xi0, xj0 = si.x.copy(), sj.x.copy()
        pairwise_average(si, sj, p)
        assert np.allclose(si.x - xi0, -(sj.x - xj0), atol=1e-14)
