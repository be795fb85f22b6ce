import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablegap.errors import AccuracyError, ContractError, ParameterError
from stablegap.rates import (
    RateTableError,
    SubpolynomialFunction,
    check_subpolynomial,
    lemma1_bound_check,
    load_rate_table,
    make_lacunary,
    make_power_law,
    make_q_zero,
    make_table,
    nearest_neighbor,
    sharp_subpolynomial_constant,
    tail_constant,
)


class TestPowerLaw:
    def test_point_values(self):
        q = make_power_law(1.0)
        assert q(1) == 1.0
        assert q(2) == pytest.approx(0.25, rel=1e-15)
        assert make_power_law(0.5)(4) == pytest.approx(0.125, rel=1e-15)

    def test_symmetric_and_zero_at_origin(self):
        q = make_power_law(1.3)
        z = np.arange(1, 50)
        np.testing.assert_array_equal(q(z), q(-z))
        assert q(0) == 0.0

    @pytest.mark.parametrize("alpha", [0.0, 2.0, -1.0, 2.5])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ParameterError):
            make_power_law(alpha)

    def test_tail_constant_near_one(self):
        assert tail_constant(make_power_law(1.0), 10_000) == pytest.approx(1.0, rel=0.01)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_tail_constant_monotone_towards_limit(self, alpha):
        vals = [alpha * tail_constant(make_power_law(alpha), x) for x in (100, 1000, 10_000)]
        dist = [abs(v - 1.0) for v in vals]
        assert dist[0] > dist[1] > dist[2]
        assert dist[2] < 1e-3


class TestQZero:
    def test_values(self):
        q0 = make_q_zero(1.0)
        assert q0(1) == pytest.approx(0.5)
        assert q0(2) == pytest.approx(1 / 6)

    def test_asymptotic_ratio(self):
        q0 = make_q_zero(1.0)
        assert q0(1000) / (1.0 * 1000.0**-2) == pytest.approx(1.0, rel=2e-3)

    def test_tail_is_exact(self):
        # sum_{y >= x} q0(y) telescopes to x^{-alpha}
        assert make_q_zero(0.7).tail_sum(37) == pytest.approx(37.0**-0.7, rel=1e-12)


class TestLacunary:
    def test_values(self):
        p = make_lacunary(1.0)
        assert p(1) == pytest.approx(0.75)
        assert p(2) == 0.0
        assert p(4) == pytest.approx(1 / 4 - 1 / 9)

    @pytest.mark.parametrize("ell", [1, 2, 5, 30, 300])
    def test_telescoping_tail_at_anchors(self, ell):
        p = make_lacunary(1.0)
        z = ell * ell
        assert p.tail_sum(z) == pytest.approx(z**-1.0, rel=1e-12)
        assert tail_constant(p, z) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_non_increasing_anchors(self):
        with pytest.raises(ParameterError):
            make_lacunary(1.0, anchors=[1, 4, 4, 9])
        with pytest.raises(ParameterError):
            make_lacunary(1.0, anchors=[2, 4, 9])


class TestTable:
    def test_tail_at_one_is_half_total(self):
        for p in (make_power_law(1.0), make_q_zero(1.5), nearest_neighbor(), make_table([1.0, 0.5, 0.1])):
            assert p.tail_sum(1) == pytest.approx(0.5 * p.total_rate(), rel=1e-9)

    def test_undeclared_tail_refuses_beyond_horizon(self):
        p = make_table([1.0, 0.25, 0.1], tail=None, alpha=1.0)
        with pytest.raises(AccuracyError) as info:
            p.tail_sum(10)
        assert info.value.residual_bound >= 0

    def test_nearest_neighbor(self):
        p = nearest_neighbor()
        assert p(1) == p(-1) == 1.0
        assert p(2) == 0.0
        assert p.total_rate() == 2.0
        assert not p.in_dan

    def test_power_tail_extension(self):
        p = make_table(make_power_law(1.0).values(64), tail="power", alpha=1.0)
        assert p(200) == pytest.approx(200.0**-2, rel=1e-12)
        assert p.tail_sum_exact(1) == pytest.approx(math.pi**2 / 6, rel=1e-12)

    def test_loader(self, tmp_path):
        f = tmp_path / "rate.txt"
        f.write_text("# z p\n1 1.0\n2, 0.25\n\n4 0.0625  # skip 3\n")
        p = load_rate_table(f)
        np.testing.assert_allclose(p.values(4), [1.0, 0.25, 0.0, 0.0625])

    @pytest.mark.parametrize(
        "text, line",
        [("1 1.0\n2\n", 2), ("1 1.0\n0 0.5\n", 2), ("1 1.0\n1 0.5\n", 2), ("1 x\n", 1), ("1 -1\n", 1)],
    )
    def test_loader_reports_line(self, tmp_path, text, line):
        f = tmp_path / "bad.txt"
        f.write_text(text)
        with pytest.raises(RateTableError) as info:
            load_rate_table(f)
        assert info.value.line == line


class TestSubpolynomial:
    def test_square_passes_with_two(self):
        phi = SubpolynomialFunction.from_callable(lambda x: x.astype(float) ** 2, 200)
        assert check_subpolynomial(phi, 2.0)

    def test_square_fails_with_one_at_first_pair(self):
        phi = SubpolynomialFunction.from_callable(lambda x: x.astype(float) ** 2, 50)
        v = check_subpolynomial(phi, 1.0)
        assert not v
        assert v.witness == (1, 1)

    def test_exponential_fails(self):
        phi = SubpolynomialFunction.from_callable(lambda x: 2.0 ** x, 64)
        assert not check_subpolynomial(phi, 4.0, 64)

    def test_sharp_constant(self):
        phi = SubpolynomialFunction.from_callable(lambda x: x.astype(float) ** 2, 100)
        k = sharp_subpolynomial_constant(phi)
        assert k == pytest.approx(2.0, rel=1e-12)
        assert check_subpolynomial(phi, k)

    def test_nu(self):
        assert SubpolynomialFunction(np.ones(3), 2.0).nu == pytest.approx(2.0)
        assert SubpolynomialFunction(np.ones(3), 1.0).nu == pytest.approx(1.0)

    def test_power_bound_examples(self):
        sq = SubpolynomialFunction.from_callable(lambda x: x.astype(float) ** 2, 300)
        assert lemma1_bound_check(sq, 2.0)
        lin = SubpolynomialFunction.from_callable(lambda x: x.astype(float), 300)
        v = lemma1_bound_check(lin, 1.0)
        assert v and v.worst_ratio == pytest.approx(0.5)

    def test_power_bound_precondition(self):
        sq = SubpolynomialFunction.from_callable(lambda x: x.astype(float) ** 2, 30)
        with pytest.raises(ContractError):
            lemma1_bound_check(sq, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=1, max_size=4),
        st.floats(1.0, 3.0),
    )
    def test_power_of_subadditive_obeys_power_bound(self, coeffs, s):
        x = np.arange(1, 257, dtype=float)
        prims = [np.ones_like(x), np.sqrt(x), np.log1p(x), np.minimum(x, 40.0)]
        h = sum(c * prims[i % len(prims)] for i, c in enumerate(coeffs)) + 1e-3
        phi = SubpolynomialFunction(h**s, 2.0 ** (s - 1.0))
        assert check_subpolynomial(phi, phi.K)
        assert lemma1_bound_check(phi, phi.K)
