import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ehcng.model import (ConstraintSet, DecisionVector, LinearExpr, QuadExpr,
                         RawHvfMix, RawProduct, RawWeymouth, eval_residuals)


def small_exprs():
    terms = st.dictionaries(st.integers(0, 7),
                            st.floats(-50, 50, allow_nan=False), max_size=5)
    const = st.floats(-50, 50, allow_nan=False)
    return st.builds(LinearExpr, terms, const)


points = st.lists(st.floats(-10, 10, allow_nan=False), min_size=8, max_size=8)


class TestLinearExpr:
    def test_term_and_value(self):
        e = LinearExpr.term(2, 3.0, const=1.0)
        assert e.value([0, 0, 4.0]) == 13.0

    def test_add_term_cancels_to_sparse_zero(self):
        e = LinearExpr.term(1, 2.5)
        e.add_term(1, -2.5)
        assert 1 not in e.terms
        assert e.is_zero()

    @given(small_exprs(), small_exprs(), points)
    def test_addition_matches_pointwise(self, a, b, x):
        assert (a + b).value(x) == pytest.approx(a.value(x) + b.value(x), abs=1e-9)

    @given(small_exprs(), st.floats(-10, 10, allow_nan=False), points)
    def test_scaling_matches_pointwise(self, a, k, x):
        assert (k * a).value(x) == pytest.approx(k * a.value(x), rel=1e-12, abs=1e-9)

    @given(small_exprs(), points)
    def test_negation_round_trip(self, a, x):
        assert (-(-a)).value(x) == pytest.approx(a.value(x))

    @given(small_exprs(), small_exprs(), points)
    def test_subtraction_matches_pointwise(self, a, b, x):
        assert (a - b).value(x) == pytest.approx(a.value(x) - b.value(x), abs=1e-9)

    @given(small_exprs())
    def test_interval_contains_samples(self, a):
        lb = np.full(8, -3.0)
        ub = np.full(8, 2.0)
        lo, hi = a.interval(lb, ub)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.uniform(lb, ub)
            v = a.value(x)
            assert lo - 1e-9 <= v <= hi + 1e-9

    def test_arrays_round_trip(self):
        e = LinearExpr({3: 2.0, 1: -1.0}, 5.0)
        idx, coef, const = e.arrays()
        back = LinearExpr(dict(zip(idx.tolist(), coef.tolist())), const)
        x = np.arange(8.0)
        assert back.value(x) == e.value(x)

    def test_canonical_key_ignores_term_order(self):
        a = LinearExpr({1: 2.0, 3: -1.0}, 0.5)
        b = LinearExpr({3: -1.0, 1: 2.0}, 0.5)
        assert a.canonical_key() == b.canonical_key()


class TestQuadExpr:
    def test_value_combines_parts(self):
        q = QuadExpr()
        q.add_quad(0, 2.0)
        q.add_linear(1, 3.0)
        q.add_const(1.0)
        assert q.value([2.0, 4.0]) == 2 * 4 + 12 + 1

    def test_rejects_concave_term(self):
        with pytest.raises(ValueError):
            QuadExpr().add_quad(0, -1.0)

    def test_add_linear_accepts_expression(self):
        q = QuadExpr()
        q.add_linear(LinearExpr({2: 1.5}, 0.25))
        assert q.value([0, 0, 2.0]) == 3.25


class TestDecisionVector:
    def test_registration_and_lookup(self):
        dv = DecisionVector()
        j = dv.add("pG", "G1", 3, 0.0, 50.0)
        assert dv.find("pG", "G1", 3) == j
        assert dv.name(j) == "pG[G1,t3]"
        assert dv.has("pG", "G1", 3)
        assert not dv.has("pG", "G1", 4)

    def test_duplicate_rejected(self):
        dv = DecisionVector()
        dv.add("w", None, 1)
        with pytest.raises(ValueError):
            dv.add("w", None, 1)

    def test_binary_forces_unit_box(self):
        dv = DecisionVector()
        j = dv.add("dir", "PL1", 1, binary=True)
        assert dv.lb()[j] == 0.0 and dv.ub()[j] == 1.0
        assert dv.binaries() == [j]

    def test_fix_and_bounds(self):
        dv = DecisionVector()
        j = dv.add("pi", "N1", 1, 20.0, 80.0)
        dv.fix(j, 42.0)
        assert dv.lb()[j] == dv.ub()[j] == 42.0
        with pytest.raises(ValueError):
            dv.set_bounds(j, lb=50.0, ub=40.0)


class TestRawResiduals:
    def test_product_sides(self):
        left = LinearExpr.term(0)
        factor = LinearExpr.term(1)
        right = LinearExpr.term(2)
        raw = RawProduct("p", "link", left, factor, right)
        assert raw.residual([3.0, 4.0, 12.0]) == 0.0
        assert raw.residual([3.0, 4.0, 10.0]) == 2.0

    def test_rel_residual_absolute_floor(self):
        # tiny signals are judged on an absolute footing
        left = LinearExpr.term(0)
        raw = RawProduct("p", "link", left, LinearExpr.constant(1.0),
                         LinearExpr.constant(0.0))
        assert raw.rel_residual([1e-4]) == pytest.approx(1e-4)

    def test_rel_residual_scales_with_magnitude(self):
        left = LinearExpr.term(0)
        raw = RawProduct("p", "link", left, LinearExpr.constant(1.0),
                         LinearExpr.constant(1000.0))
        assert raw.rel_residual([1010.0]) == pytest.approx(10.0 / 1010.0)

    def test_weymouth_sign_convention(self):
        raw = RawWeymouth("wey", "weymouth_raw", 0, 1, 2, 3, c0=2.0, m_ref=16.0)
        # reverse flow draws on the mirrored pressure drop
        x = [-4.0, 3.0, 5.0, 16.0]
        lhs, rhs = raw.sides(x)
        assert lhs == 16.0
        assert rhs == pytest.approx(-2.0 * (9.0 - 25.0))

    def test_hvf_mix_initial_period_uses_constant(self):
        supply = LinearExpr.term(1)
        dch = LinearExpr.constant(0.0)
        stored = LinearExpr.term(2)
        raw = RawHvfMix("mix", "hvf_mix", 0, supply, dch, stored, w0=0.05)
        # w * (supply + stored) == w0 * stored
        x = [0.05, 30.0, 70.0]
        lhs, rhs = raw.sides(x)
        assert lhs == pytest.approx(0.05 * 100.0)
        assert rhs == pytest.approx(0.05 * 70.0)


class TestConstraintSet:
    def test_duplicate_name_rejected(self):
        cs = ConstraintSet()
        cs.add_eq("a", "t", LinearExpr())
        with pytest.raises(ValueError):
            cs.add_ineq("a", "t", LinearExpr())

    def test_range_emits_two_rows(self):
        cs = ConstraintSet()
        cs.add_range("box", "cap", LinearExpr.term(0), 1.0, 5.0)
        assert len(cs.ineq) == 2
        x = [7.0]
        slacks = [-r.expr.value(x) for r in cs.ineq]
        assert min(slacks) == -2.0

    def test_merge_and_tag_count(self):
        a = ConstraintSet()
        a.add_eq("e1", "balance", LinearExpr())
        b = ConstraintSet()
        b.add_ineq("i1", "balance", LinearExpr())
        a.merge(b)
        assert a.count_tag("balance") == 2


def test_eval_residuals_reports_worst():
    dv = DecisionVector()
    j0 = dv.add("u", None, 1, 0.0, 10.0)
    j1 = dv.add("u", None, 2, 0.0, 10.0)
    cs = ConstraintSet()
    cs.add_eq("sum", "balance", LinearExpr({j0: 1.0, j1: 1.0}, -5.0))
    cs.add_ineq("cap", "cap", LinearExpr({j0: 1.0}, -3.5))
    x = np.array([4.0, 1.5])
    rep = eval_residuals(dv, cs, x)
    assert rep.max_eq == pytest.approx(0.5)
    assert rep.worst_eq() == "sum"
    assert rep.ineq_slack["cap"] == pytest.approx(-0.5)
    assert rep.min_slack == pytest.approx(-0.5)
    assert rep.worst_ineq() == "cap"
    assert "max equality residual" in rep.summary()
