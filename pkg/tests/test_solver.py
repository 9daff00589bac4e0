"""Direct checks of the conic machinery on small hand-built programs."""
import math

import numpy as np
import pytest

from ehcng.model import DecisionVector, LinearExpr, QuadExpr
from ehcng.solver import ProgramBuilder, presolve
from ehcng.solver.branch import solve_misocp
from ehcng.solver.ipm import SolverSettings, solve_relaxation


def builder():
    return ProgramBuilder(DecisionVector())


def test_lp_corner():
    b = builder()
    x = b.dv.add("x", None, None, 0.0, 1.0)
    y = b.dv.add("y", None, None, 0.0, 1.0)
    b.add_ineq("cover", 1.0 - LinearExpr({x: 1.0, y: 1.0}))
    obj = QuadExpr()
    obj.add_linear(LinearExpr({x: 1.0, y: 3.0}))
    b.set_objective(obj)
    sol = solve_relaxation(b.build())
    assert sol.ok
    assert sol.obj == pytest.approx(1.0, abs=1e-6)
    assert sol.x[x] == pytest.approx(1.0, abs=1e-6)


def test_diagonal_qp():
    b = builder()
    x = b.dv.add("x", None, None, 0.0, 10.0)
    obj = QuadExpr()
    obj.add_quad(x, 1.0)
    obj.add_linear(x, -4.0)
    obj.add_const(4.0)
    b.set_objective(obj)
    sol = solve_relaxation(b.build())
    assert sol.ok
    assert sol.x[x] == pytest.approx(2.0, abs=1e-5)
    assert sol.obj == pytest.approx(0.0, abs=1e-5)


def test_socp_distance():
    b = builder()
    t = b.dv.add("t", None, None, 0.0, 100.0)
    b.soc_over_exprs("dist", LinearExpr.term(t),
                     [LinearExpr.constant(3.0), LinearExpr.constant(4.0)])
    obj = QuadExpr()
    obj.add_linear(t, 1.0)
    b.set_objective(obj)
    sol = solve_relaxation(b.build())
    assert sol.ok
    assert sol.obj == pytest.approx(5.0, abs=1e-6)


def test_infeasible_rows_certified():
    b = builder()
    x = b.dv.add("x", None, None, 0.0, 10.0)
    b.add_ineq("hi", LinearExpr({x: 1.0}, -1.0))   # x <= 1
    b.add_ineq("lo", LinearExpr({x: -1.0}, 2.0))   # x >= 2
    b.set_objective(QuadExpr())
    sol = solve_relaxation(b.build())
    assert sol.status == "primal_infeasible"


def test_unbounded_detected():
    b = builder()
    x = b.dv.add("x", None, None, 0.0, float("inf"))
    obj = QuadExpr()
    obj.add_linear(x, -1.0)
    b.set_objective(obj)
    sol = solve_relaxation(b.build())
    assert sol.status == "dual_infeasible"


def test_knapsack_branching():
    # LP relaxation is fractional (x2 = 2/3); the integral optimum packs
    # only the second item
    b = builder()
    x1 = b.dv.add("x", 1, None, binary=True)
    x2 = b.dv.add("x", 2, None, binary=True)
    b.add_ineq("weight", LinearExpr({x1: 2.0, x2: 3.0}, -4.0))
    obj = QuadExpr()
    obj.add_linear(LinearExpr({x1: -3.0, x2: -4.0}))
    b.set_objective(obj)
    sol = solve_misocp(b.build(), SolverSettings(mip_gap=1e-9))
    assert sol.ok
    assert sol.obj == pytest.approx(-4.0, abs=1e-6)
    assert round(sol.x[x1]) == 0 and round(sol.x[x2]) == 1
    assert sol.nodes >= 1


def test_misocp_mixed_cone_and_binary():
    # opening the switch shortens the reachable point: min t st
    # t >= ||(x-2, 1)||, x <= 2*b, cost on t plus a fixed charge on b
    b = builder()
    t = b.dv.add("t", None, None, 0.0, 50.0)
    x = b.dv.add("x", None, None, 0.0, 4.0)
    s = b.dv.add("s", None, None, binary=True)
    b.soc_over_exprs("reach", LinearExpr.term(t),
                     [LinearExpr.term(x) - 2.0, LinearExpr.constant(1.0)])
    b.add_ineq("gate", LinearExpr({x: 1.0, s: -2.0}))
    obj = QuadExpr()
    obj.add_linear(LinearExpr({t: 1.0, s: 0.5}))
    b.set_objective(obj)
    sol = solve_misocp(b.build(), SolverSettings(mip_gap=1e-9))
    assert sol.ok
    # closed: t = sqrt(4+1); open: t = 1 plus the 0.5 charge
    assert sol.obj == pytest.approx(1.5, abs=1e-6)
    assert round(sol.x[s]) == 1


def test_presolve_folds_pinned_vars():
    b = builder()
    x = b.dv.add("x", None, None, 0.0, 5.0)
    y = b.dv.add("y", None, None, 2.0, 2.0)
    b.add_eq("tie", LinearExpr({x: 1.0, y: 1.0}, -3.0))  # x + y = 3
    obj = QuadExpr()
    obj.add_linear(x, 1.0)
    b.set_objective(obj)
    prog = b.build()
    pre = presolve(prog)
    assert pre.status == "reduced"
    assert pre.program.n == 1
    sol = solve_relaxation(pre.program)
    full = pre.inflate(sol.x)
    assert full[x] == pytest.approx(1.0, abs=1e-6)
    assert full[y] == 2.0


def test_presolve_detects_contradiction():
    b = builder()
    x = b.dv.add("x", None, None, 1.0, 1.0)
    y = b.dv.add("y", None, None, 2.0, 2.0)
    b.add_eq("clash", LinearExpr({x: 1.0, y: 1.0}, -5.0))
    b.set_objective(QuadExpr())
    pre = presolve(b.build())
    assert pre.status == "infeasible"


def test_row_order_is_name_stable():
    def make(order):
        b = builder()
        x = b.dv.add("x", None, None, 0.0, 1.0)
        rows = [("r_a", LinearExpr({x: 1.0}, -0.5)),
                ("r_b", LinearExpr({x: -1.0}, 0.1))]
        for name, expr in (rows if order else reversed(rows)):
            b.add_ineq(name, expr)
        b.set_objective(QuadExpr())
        return b.build()
    p1, p2 = make(True), make(False)
    assert p1.ineq_names == p2.ineq_names
    assert [r.tolist() for r in p1.G_coef] == [r.tolist() for r in p2.G_coef]


def test_duplicate_row_name_rejected():
    b = builder()
    x = b.dv.add("x", None, None, 0.0, 1.0)
    b.add_ineq("r", LinearExpr({x: 1.0}))
    with pytest.raises(ValueError):
        b.add_eq("r", LinearExpr({x: 1.0}))


def test_solve_is_deterministic():
    def run():
        b = builder()
        x = b.dv.add("x", None, None, 0.0, 3.0)
        y = b.dv.add("y", None, None, 0.0, 3.0)
        s = b.dv.add("s", None, None, binary=True)
        b.add_ineq("mix", LinearExpr({x: 1.0, y: 1.0, s: -1.5}, -1.0))
        b.soc_over_exprs("ball", 2.0 + LinearExpr.term(x),
                         [LinearExpr.term(y) - 0.5])
        obj = QuadExpr()
        obj.add_quad(x, 0.5)
        obj.add_linear(LinearExpr({x: -1.0, y: -2.0, s: 0.3}))
        b.set_objective(obj)
        return solve_misocp(b.build(), SolverSettings(mip_gap=1e-9))
    a, bb = run(), run()
    assert a.obj == bb.obj
    assert np.array_equal(a.x, bb.x)


def test_quad_objective_value_reported_exactly():
    # the reported objective is evaluated on the returned point, not on the
    # internal epigraph variable
    b = builder()
    x = b.dv.add("x", None, None, -4.0, 4.0)
    obj = QuadExpr()
    obj.add_quad(x, 2.0)
    obj.add_linear(x, 1.0)
    b.set_objective(obj)
    prog = b.build()
    sol = solve_relaxation(prog)
    assert sol.ok
    assert sol.obj == pytest.approx(prog.objective_value(sol.x), abs=1e-9)
    assert sol.x[x] == pytest.approx(-0.25, abs=1e-5)
