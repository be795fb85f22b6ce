import math

import numpy as np
import pytest
from scipy.integrate import quad

from stablegap import _kernels
from stablegap.errors import AlignmentError, ParameterError, SamplingDomainError, StepSizeError, TruncationError
from stablegap.kinetics import (
    JumpSampler,
    SemigroupState,
    block_projection_bound,
    decay_exponent_fit,
    default_box_radius,
    dirichlet_double_sum,
    dissipation_envelope,
    dissipation_rate,
    evolve_grid,
    evolve_semigroup,
    mc_return_probability,
    psi_dissipation_check,
    psi_functional,
    return_probability_table,
)
from stablegap.rates import make_lacunary, make_power_law, make_q_zero, make_table, nearest_neighbor


def fourier_return(t: float) -> float:
    """``P(y(t) = 0)`` on the full lattice for ``q(z) = |z|^-2``.

    The symbol ``sum_z q(z) (1 - cos kz)`` equals ``pi k - k^2 / 2`` on ``[0, 2 pi]``.
    """
    val, _ = quad(lambda k: math.exp(-t * (math.pi * k - 0.5 * k * k)), 0.0, math.pi, limit=200)
    return val / math.pi


@pytest.fixture(scope="module")
def power_states():
    return evolve_grid(make_power_law(1.0), [0.0, 1.0, 5.0, 10.0, 20.0, 40.0], 2048)


class TestSemigroup:
    def test_initial_condition(self, power_states):
        s = power_states[0]
        assert s.origin == 1.0 and s.leaked_mass == 0.0
        assert psi_functional(s) == 1.0

    def test_mass_and_positivity(self, power_states):
        for s in power_states:
            assert abs(s.mass + s.leaked_mass - 1.0) <= 1e-10
            assert s.values.min() >= 0.0

    def test_symmetry(self, power_states):
        for s in power_states:
            np.testing.assert_allclose(s.values, s.values[::-1], atol=1e-12, rtol=0)

    def test_psi_monotone(self, power_states):
        psi = [psi_functional(s) for s in power_states]
        assert all(b <= a for a, b in zip(psi, psi[1:]))

    def test_reversibility_identity(self):
        p = make_power_law(1.0)
        a, b = evolve_grid(p, [7.5, 15.0], 2048)
        assert abs(psi_functional(a) - b.origin) <= 1e-10 + b.leaked_mass

    def test_fourier_oracle(self, power_states):
        s = power_states[3]
        assert s.origin == pytest.approx(fourier_return(10.0), rel=1e-3)

    def test_leak_budget(self):
        with pytest.raises(TruncationError) as info:
            evolve_semigroup(make_power_law(1.0), 50.0, 64, leak_budget=1e-6)
        assert info.value.leaked_mass > 1e-6

    def test_negative_time(self):
        with pytest.raises(ParameterError):
            evolve_semigroup(make_power_law(1.0), -1.0, 16)

    def test_default_box(self):
        assert default_box_radius(1.0) == 2048
        assert default_box_radius(1.5) == 2048
        assert default_box_radius(0.5) > 8192


class TestDecay:
    def test_power_law_alpha_one(self):
        ts = np.geomspace(10, 100, 8)
        fit = decay_exponent_fit(ts, [s.origin for s in evolve_grid(make_power_law(1.0), ts, 2048)], (10, 100))
        assert abs(fit.slope + 1.0) <= 0.15

    def test_nearest_neighbour(self):
        ts = np.geomspace(50, 500, 8)
        fit = decay_exponent_fit(ts, [s.origin for s in evolve_grid(nearest_neighbor(), ts, 512)], (50, 500))
        assert abs(fit.slope + 0.5) <= 0.1

    def test_window_too_small(self):
        with pytest.raises(ParameterError):
            decay_exponent_fit([1, 2, 20], [1, 0.5, 0.1], (10, 100))

    def test_nonpositive(self):
        with pytest.raises(ParameterError):
            decay_exponent_fit([10, 20, 30], [1.0, 0.0, 0.1])

    def test_exact_power(self):
        t = np.array([10.0, 20.0, 40.0, 80.0])
        fit = decay_exponent_fit(t, 3.0 * t**-0.75)
        assert fit.slope == pytest.approx(-0.75, abs=1e-12)
        assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)


class TestDissipation:
    def test_five_site_uniform(self):
        f = np.zeros(9)
        f[2:7] = 0.2
        assert dirichlet_double_sum(nearest_neighbor(), f) == pytest.approx(4 / 25, rel=1e-12)
        assert dissipation_rate(nearest_neighbor(), f) == pytest.approx(-4 / 25, rel=1e-12)

    def test_finite_difference_at_ten(self, power_states):
        v = psi_dissipation_check(make_power_law(1.0), power_states[3], 1e-3)
        assert v.passed and v.scheme == "centered"
        assert v.fitted_prefactor == pytest.approx(-1.0, abs=1e-4)

    def test_delta_initial_condition(self, power_states):
        p = make_power_law(1.0)
        v = psi_dissipation_check(p, power_states[0], 1e-3)
        assert v.passed and v.scheme == "one-sided"
        # at the delta the double sum is 2 * (in-box escape rate) and dpsi/dt = -2 gamma
        assert v.predicted == pytest.approx(-2.0 * p.total_rate(), rel=1e-6)

    def test_step_too_large(self, power_states):
        with pytest.raises(StepSizeError):
            psi_dissipation_check(make_power_law(1.0), power_states[3], 0.5)


class TestBlocks:
    def test_block_constant_is_equality(self):
        p = make_power_law(1.0)
        vals = np.repeat(np.array([0.1, 0.3, 0.2, 0.15, 0.25]), 3) / 3.0
        state = SemigroupState(7, vals, 0.0, 0.0, 0.0, 0.0, p)
        v = block_projection_bound(state, 1)
        assert v.holds
        np.testing.assert_allclose(v.lhs, v.rhs, rtol=1e-14)

    def test_power_law_t_ten(self):
        p = make_power_law(1.0)
        state = evolve_semigroup(p, 10.0, 2047)
        assert block_projection_bound(state, 4)

    def test_alignment(self, power_states):
        with pytest.raises(AlignmentError):
            block_projection_bound(power_states[3], 4)

    def test_envelope_is_a_lower_bound(self, power_states):
        p = make_power_law(1.0)
        rows = dissipation_envelope(p, power_states[1:], kappa1=4.0)
        for r in rows:
            assert 0 < r.bound <= r.dissipation
        ratios = [r.ratio for r in rows]
        assert max(ratios) / min(ratios) < 2.0

    def test_envelope_with_computed_gaps(self, power_states):
        p = make_power_law(1.0)
        rows = dissipation_envelope(p, power_states[2:4], n_values=[16, 64, 128, 256])
        for r in rows:
            assert 0 < r.bound <= r.dissipation
        # blocks too small to beat psi only give the trivial bound
        assert dissipation_envelope(p, power_states[4:5], n_values=[1, 2])[0].bound == 0.0


class TestMonteCarlo:
    def test_time_zero(self):
        res = mc_return_probability(make_power_law(1.0), [0.0], 500, seed=1)
        assert res.values == (1.0,) and res.stderr == (0.0,)

    def test_agrees_with_semigroup(self):
        p = make_power_law(1.0)
        exact = evolve_semigroup(p, 20.0, 2048).origin
        res = mc_return_probability(p, [20.0], 100_000, seed=7)
        assert abs(res.values[0] - exact) <= 3 * res.stderr[0]

    @pytest.mark.parametrize("p", [make_q_zero(1.0), make_lacunary(1.0), nearest_neighbor(), make_power_law(1.5)])
    def test_other_rates(self, p):
        exact = evolve_semigroup(p, 10.0, 2048).origin
        res = mc_return_probability(p, [10.0], 40_000, seed=3)
        assert abs(res.values[0] - exact) <= 4 * res.stderr[0]

    def test_deterministic(self):
        p = make_power_law(1.0)
        a = mc_return_probability(p, [5.0, 10.0], 5000, seed=123)
        b = mc_return_probability(p, [5.0, 10.0], 5000, seed=123, workers=4)
        assert a == b

    @pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
    def test_backends_identical(self):
        p = make_power_law(0.8)
        a = mc_return_probability(p, [3.0, 9.0], 6000, seed=5, backend="numba")
        b = mc_return_probability(p, [3.0, 9.0], 6000, seed=5, backend="numpy")
        assert a == b

    def test_undeclared_tail(self):
        p = make_table([1.0, 0.2], tail=None)
        with pytest.raises(SamplingDomainError):
            JumpSampler.build(p, 10)

    def test_sampler_distribution(self):
        p = make_table([1.0, 0.5, 0.25])
        s = JumpSampler.build(p)
        z = s.sample(np.random.default_rng(0), 200_000)
        freq = np.array([np.mean(np.abs(z) == k) for k in (1, 2, 3)])
        np.testing.assert_allclose(freq, np.array([1.0, 0.5, 0.25]) / 1.75, atol=5e-3)
        assert abs(np.mean(z > 0) - 0.5) < 5e-3

    def test_table(self):
        rows = return_probability_table(make_power_law(1.0), [10.0, 30.0], 2000, seed=2)
        assert [r.t for r in rows] == [10.0, 30.0]
        assert all(r.mc_stderr > 0 for r in rows)

    def test_samples_positive(self):
        with pytest.raises(ParameterError):
            mc_return_probability(make_power_law(1.0), [1.0], 0)
