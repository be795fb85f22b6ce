import math

import numpy as np
import pytest

from stablegap.errors import CapacityError, ClassificationError, DegenerateError, ParameterError
from stablegap.particles import (
    build_exclusion_generator,
    build_zero_range_generator,
    classify_interaction,
    enumerate_exclusion,
    enumerate_zero_range,
    exclusion_gap,
    indicator_interaction,
    linear_interaction,
    move_energy,
    moving_lemma_check,
    table_interaction,
    theorem3_check,
    verify_aldous,
    zero_range_gap,
    zero_range_measure,
)
from stablegap.rates import constant_rate, make_lacunary, make_power_law, nearest_neighbor
from stablegap.spectrum import build_walk_generator, dense_spectrum, spectral_gap


class TestExclusionEnsemble:
    @pytest.mark.parametrize("n, ell, count", [(1, 2, 3), (2, 2, 10), (3, 0, 1), (3, 7, 1), (3, 3, 35)])
    def test_counts(self, n, ell, count):
        E = enumerate_exclusion(n, ell)
        assert E.size == count == math.comb(2 * n + 1, ell)
        assert np.all(E.states.sum(axis=1) == ell)

    def test_rank_is_lexicographic_bijection(self):
        E = enumerate_exclusion(3, 3)
        np.testing.assert_array_equal(E.rank(E.states), np.arange(E.size))
        rows = [tuple(r) for r in E.states]
        assert rows == sorted(rows)

    def test_out_of_range(self):
        with pytest.raises(ParameterError):
            enumerate_exclusion(1, 4)

    def test_capacity(self):
        with pytest.raises(CapacityError) as info:
            enumerate_exclusion(12, 12, budget=1000)
        assert info.value.count == math.comb(25, 12)


class TestZeroRangeEnsemble:
    @pytest.mark.parametrize("n, ell, count", [(1, 2, 6), (1, 1, 3), (2, 0, 1), (2, 6, 210)])
    def test_counts(self, n, ell, count):
        E = enumerate_zero_range(n, ell)
        assert E.size == count == math.comb(ell + 2 * n, 2 * n)
        assert np.all(E.states.sum(axis=1) == ell)
        assert E.states.min() >= 0

    def test_rank_is_lexicographic_bijection(self):
        E = enumerate_zero_range(2, 4)
        np.testing.assert_array_equal(E.rank(E.states), np.arange(E.size))
        rows = [tuple(r) for r in E.states]
        assert rows == sorted(rows)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            enumerate_zero_range(10, 20, budget=10_000)


class TestMeasure:
    def test_indicator_is_uniform(self):
        E = zero_range_measure(indicator_interaction(), enumerate_zero_range(2, 3))
        np.testing.assert_allclose(E.measure, 1.0 / E.size, rtol=1e-14)

    def test_linear_is_multinomial(self):
        E = zero_range_measure(linear_interaction(), enumerate_zero_range(1, 3))
        w = np.array([1.0 / np.prod([math.factorial(k) for k in s]) for s in E.states])
        np.testing.assert_allclose(E.measure, w / w.sum(), rtol=1e-14)

    @pytest.mark.parametrize("g", [linear_interaction(), indicator_interaction(), table_interaction([0, 1, 3, 3.5, 7])])
    def test_normalised(self, g):
        E = zero_range_measure(g, enumerate_zero_range(1, 4))
        assert abs(E.measure.sum() - 1.0) <= 1e-12
        assert np.all(E.measure > 0)

    def test_large_ell_in_log_space(self):
        E = zero_range_measure(linear_interaction(), enumerate_zero_range(1, 64))
        assert abs(E.measure.sum() - 1.0) <= 1e-12
        assert np.isfinite(E.log_Z)


class TestExclusionDynamics:
    def test_single_particle_is_walk(self):
        p = make_power_law(1.0)
        G = build_exclusion_generator(p, enumerate_exclusion(3, 1))
        W = build_walk_generator(p, 3)
        # ranks reverse the site order for one particle
        np.testing.assert_allclose(G.rates, W.rates[::-1, ::-1], atol=1e-15)

    def test_two_particles_on_three_sites(self):
        assert exclusion_gap(make_power_law(1.0), 1, 2).gap == pytest.approx(1.5, abs=1e-12)

    def test_uniform_balance(self):
        G = build_exclusion_generator(make_lacunary(1.0), enumerate_exclusion(3, 3))
        assert G.detailed_balance_defect() == 0.0
        assert G.row_sum_defect() <= 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            build_exclusion_generator(make_power_law(1.0), enumerate_exclusion(2, 0))

    @pytest.mark.parametrize("p", [make_power_law(1.0), nearest_neighbor(), make_lacunary(1.0)])
    def test_aldous(self, p):
        for n in (1, 2, 3):
            rep = verify_aldous(p, n, 1e-8)
            assert rep.passed, rep
            assert abs(rep.gaps[1] - rep.walk_gap) <= 1e-10

    def test_particle_hole(self):
        rep = verify_aldous(make_power_law(1.5), 3)
        for ell in range(1, 7):
            assert rep.gaps[ell] == pytest.approx(rep.gaps[7 - ell], abs=1e-9)


class TestZeroRangeDynamics:
    def test_linear_matches_walk(self):
        p = make_power_law(1.0)
        g = linear_interaction()
        for n in (1, 2):
            walk = spectral_gap(build_walk_generator(p, n)).gap
            for ell in (1, 2, 3, 4):
                assert zero_range_gap(p, g, n, ell).gap == pytest.approx(walk, abs=1e-8)

    def test_one_particle_any_g(self):
        p = make_power_law(1.0)
        walk = spectral_gap(build_walk_generator(p, 1)).gap
        for g in (indicator_interaction(), table_interaction([0, 2, 2.5, 4])):
            assert zero_range_gap(p, g, 1, 1).gap == pytest.approx(walk * g(1), abs=1e-10)

    def test_balance_on_random_moves(self):
        rng = np.random.default_rng(5)
        g = table_interaction([0, 1, 1.7, 2.2, 4.0, 4.5])
        E = zero_range_measure(g, enumerate_zero_range(2, 5))
        G = build_zero_range_generator(make_power_law(1.0), g, E)
        mu = E.measure
        for _ in range(200):
            i = int(rng.integers(E.size))
            x, y = rng.choice(E.sites, size=2, replace=False)
            if E.states[i, x] == 0:
                continue
            moved = E.states[i].copy()
            moved[x] -= 1
            moved[y] += 1
            j = int(E.rank(moved[None, :])[0])
            assert mu[i] * G.rates[i, j] == pytest.approx(mu[j] * G.rates[j, i], rel=1e-12)

    def test_indicator_floor(self):
        table = theorem3_check(make_power_law(1.0), indicator_interaction(), (1, 2, 3), range(1, 7))
        assert table.classification.case == "ii"
        # frozen from an independent eigensolve sweep: minimum 5.8606 at n=2, ell=6
        assert table.floor == pytest.approx(5.8606, abs=1e-4)

    def test_linear_table_positive(self):
        table = theorem3_check(make_power_law(1.0), linear_interaction(), (1, 2, 3), range(1, 5))
        assert table.classification.case == "i"
        assert table.floor > 0

    def test_upper_bound_is_informational(self):
        row = zero_range_gap(make_power_law(1.0), indicator_interaction(), 2, 3, "ii")
        assert row.test_bound is not None and row.test_bound >= row.gap

    def test_complete_graph_reference(self):
        lin, ind = linear_interaction(), indicator_interaction()
        scaled = []
        for n in (1, 2, 3):
            N = 2 * n + 1
            p = constant_rate(1.0, 2 * n)
            assert zero_range_gap(p, lin, n, 3).gap == pytest.approx(N, rel=1e-10)
            for ell in (1, 3, 5):
                rho = ell / N
                scaled.append(zero_range_gap(p, ind, n, ell).gap * (1 + rho) ** 2 / N)
        assert 0.3 <= min(scaled) and max(scaled) <= 3.0


class TestClassification:
    def test_kinds(self):
        assert classify_interaction(linear_interaction()).case == "i"
        assert classify_interaction(indicator_interaction()).case == "ii"
        c = classify_interaction(table_interaction([0, 1, 1, 2, 2, 3, 3, 4, 4]))
        assert c.case == "i" and c.ell0 == 2 and c.eps0 == pytest.approx(0.5)

    def test_neither(self):
        with pytest.raises(ClassificationError):
            classify_interaction(table_interaction([0, 1, 2, 2, 2, 2, 2, 2, 2]))

    def test_andjel(self):
        assert table_interaction([0, 1, 4, 5]).andjel_constant() == 3.0

    def test_invalid(self):
        with pytest.raises(ParameterError):
            table_interaction([1, 2])
        with pytest.raises(ParameterError):
            table_interaction([0, 1, 0])


class TestMovingLemma:
    def test_constant_function(self):
        g = linear_interaction()
        E = zero_range_measure(g, enumerate_zero_range(1, 2))
        v = moving_lemma_check(make_power_law(1.0), g, E, np.ones(E.size), -1, 0, 1)
        assert v.lhs == 0.0 and v

    def test_all_triples(self):
        rng = np.random.default_rng(9)
        g = linear_interaction()
        E = zero_range_measure(g, enumerate_zero_range(1, 2))
        for _ in range(20):
            f = rng.standard_normal(E.size)
            for x in (-1, 0, 1):
                for y in (-1, 0, 1):
                    for z in (-1, 0, 1):
                        assert moving_lemma_check(make_power_law(1.0), g, E, f, x, y, z)

    def test_null_move(self):
        g = indicator_interaction()
        E = zero_range_measure(g, enumerate_zero_range(1, 2))
        assert move_energy(g, E, np.arange(E.size, dtype=float), 0, 0) == 0.0

    def test_sites_checked(self):
        g = linear_interaction()
        E = zero_range_measure(g, enumerate_zero_range(1, 2))
        with pytest.raises(ParameterError):
            move_energy(g, E, np.zeros(E.size), 0, 3)


def test_ensemble_spectrum_matches_walk_spectrum_for_one_particle():
    p = nearest_neighbor()
    G = build_exclusion_generator(p, enumerate_exclusion(2, 1))
    np.testing.assert_allclose(dense_spectrum(G), dense_spectrum(build_walk_generator(p, 2)), atol=1e-12)
