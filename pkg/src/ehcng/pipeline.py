"""Staged assembly and solution of the coupled dispatch problem.

A full run is three passes over the same case.  A deterministic warm-up at
the initial blend fraction supplies flow and pressure references; the main
mixed-integer program then carries the uncertainty machinery and the
recovery-side pipe rows; finally a short sequence of convex refinements
with the discrete decisions pinned re-linearizes the pipe physics and the
response consistency around its own solution until the references settle.
"""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

from .dispatch import build_dispatch_model
from .model import QuadExpr
from .affine import build_affine_links, generate_tilde_conditions
from .drjcc import decompose
from .convexify import (binary_expand, convexify_hvf, convexify_fuel_response,
                        convexify_weymouth, convexify_alpha_weymouth,
                        convexify_alpha_flow, sign_bigM, refs_from_point)
from .solver import ProgramBuilder, solve_misocp
from .solver.ipm import SolverSettings

POLICIES = ("P1", "P2", "P3", "P4", "PP")

ALPHA_KINDS = ("aNG", "aG", "aFG", "aP2Hp", "aP2Hf", "aDch", "aE",
               "aS", "aC", "aPi", "aMn", "aIn", "aOut")
RESERVE_KINDS = ("rNGu", "rNGd", "rGu", "rGd", "rP2Hu", "rP2Hd", "rSu", "rSd")

# recourse channels left free per policy; None means everything
_POLICY_FREE = {
    "PP": None,
    "P2": frozenset(("aNG",)),
    "P3": frozenset(("aP2Hp", "aP2Hf", "aDch", "aE")),
    "P4": frozenset(("aP2Hp", "aP2Hf", "aDch", "aE")),
}

P4_STORAGE_FACTOR = 1.5

# price per unit of squared-pressure slack on the pipe recovery rows; high
# enough that the refinement walks the slack out whenever geometry allows
WEYMOUTH_PENALTY = 200.0

# network response channels carry no cost of their own, which leaves flat
# directions the refinement would wander along; a vanishing quadratic pull
# toward zero makes the reported point unique without moving the cost
RESPONSE_REG = 1e-3
_REG_KINDS = ("aPi", "aMn")


def effective_case(case, policy):
    """The case a policy actually runs on; P4 relaxes the storage ceiling."""
    if policy != "P4":
        return case
    scaled = copy.deepcopy(case)
    for s in scaled.stations.storages:
        s.e_max *= P4_STORAGE_FACTOR
    return scaled


def _fix_kinds(dv, kinds):
    wanted = set(kinds)
    for j, k in enumerate(dv.kinds):
        if k in wanted:
            dv.fix(j, 0.0)


def _apply_policy_mask(dv, policy):
    free = _POLICY_FREE[policy]
    if free is None:
        return
    _fix_kinds(dv, [k for k in ALPHA_KINDS if k not in free])


@dataclass
class ProgramContext:
    case: object
    method: str
    policy: str
    epsilon: float
    dv: object
    cset: object
    objective: object
    conditions: list
    report: object
    splits: list
    bea: object
    dirs: dict
    penalty: object = None


def build_program(case, method="MP", policy="PP", eps=None, *,
                  refs=None, fixed_w=None, pin_bits=None, pin_dirs=None):
    """Assemble one conic program for the case.

    Without references only the pressure-loss cones of the pipe equation
    are present.  References add the recovery rows, and references that
    carry response values add the response-consistency rows as well.
    Bit and direction patterns from an earlier solve can be pinned to turn
    the program into a pure conic one.
    """
    if policy not in POLICIES:
        raise ValueError("unknown policy %r" % (policy,))
    eps = case.solver.epsilon if eps is None else float(eps)

    dv, cset, obj = build_dispatch_model(case)
    builder = ProgramBuilder(dv)
    builder.add_constraint_set(cset)

    bea = binary_expand(builder, case)
    if fixed_w is not None:
        for t in range(1, case.T + 1):
            bea.fix(dv, t, fixed_w)
    elif pin_bits is not None:
        for t, vals in pin_bits.items():
            for j, v in zip(bea.bits[t], vals):
                dv.fix(j, float(v))
    convexify_hvf(builder, case, bea)

    conditions = []
    report = None
    splits = []
    if policy == "P1":
        _fix_kinds(dv, ALPHA_KINDS)
        _fix_kinds(dv, RESERVE_KINDS)
    else:
        links = build_affine_links(case, dv)
        builder.add_constraint_set(links)
        cset.merge(links)
        convexify_fuel_response(builder, case, bea)
        _apply_policy_mask(dv, policy)
        conditions = generate_tilde_conditions(case, dv)
        report, splits = decompose(builder, conditions, case.ambiguity_set(),
                                   eps, method)

    dirs = sign_bigM(builder, case)
    if pin_dirs is not None:
        for key, v in pin_dirs.items():
            dv.fix(dirs[key], float(v))
    pen = convexify_weymouth(builder, case, bea, refs, dirs)
    if refs is not None and refs.a_mn is not None and policy != "P1":
        convexify_alpha_weymouth(builder, case, refs)
        convexify_alpha_flow(builder, case, bea, dirs)

    reg = []
    if policy != "P1":
        free = _POLICY_FREE[policy]
        loose = set(k for k in _REG_KINDS if free is None or k in free)
        if loose:
            reg = [j for j, k in enumerate(dv.kinds) if k in loose]
    if pen.terms or reg:
        solver_obj = QuadExpr()
        solver_obj.quad = dict(obj.quad)
        solver_obj.lin = obj.lin + WEYMOUTH_PENALTY * pen
        for j in reg:
            solver_obj.add_quad(j, RESPONSE_REG)
        builder.set_objective(solver_obj)
        if not pen.terms:
            pen = None
    else:
        pen = None
        builder.set_objective(obj)
    ctx = ProgramContext(case, method, policy, eps, dv, cset, obj,
                         conditions, report, splits, bea, dirs, pen)
    return builder.build(), ctx


@dataclass
class CaseSolution:
    status: str
    objective: float = None
    x: object = None
    ctx: ProgramContext = None
    mip: object = None
    timings: dict = field(default_factory=dict)
    ccp_rounds: int = 0
    converged: bool = False
    stage: str = "done"
    message: str = ""
    pipe_slack: float = 0.0

    @property
    def ok(self):
        return self.status in ("optimal", "gap_limit")

    @property
    def dv(self):
        return self.ctx.dv if self.ctx is not None else None

    @property
    def conditions(self):
        return self.ctx.conditions if self.ctx is not None else []

    @property
    def report(self):
        return self.ctx.report if self.ctx is not None else None

    def value(self, kind, comp=None, t=None):
        return float(self.x[self.ctx.dv.find(kind, comp, t)])


def _ref_drift(old, new):
    worst = 0.0
    for name in ("f", "pi", "w", "a_mn", "a_pi"):
        a, b = getattr(old, name), getattr(new, name)
        if a is None or b is None:
            continue
        for key, nv in b.items():
            ov = a.get(key, 0.0)
            worst = max(worst, abs(nv - ov) / max(1.0, abs(ov)))
    return worst


def _settings_for(case, time_limit=None, mip_gap=None):
    return SolverSettings(mip_gap=case.solver.mip_gap if mip_gap is None else mip_gap,
                          node_limit=case.solver.node_limit,
                          time_limit=time_limit)


def solve_case(case, method="MP", policy="PP", eps=None, *, fixed_w=None,
               settings=None, time_limit=None):
    """Run the full staged solve and return the refined schedule."""
    if policy not in POLICIES:
        raise ValueError("unknown policy %r" % (policy,))
    case = effective_case(case, policy)
    if settings is None:
        settings = _settings_for(case, time_limit)
    timings = {}

    # warm-up: deterministic, blend pinned, loss cones only
    t0 = time.monotonic()
    w_init = case.hcng.hvf.initial if fixed_w is None else fixed_w
    prog, ctx = build_program(case, method, "P1", eps, fixed_w=w_init)
    sol = solve_misocp(prog, settings)
    timings["init"] = time.monotonic() - t0
    if not sol.ok:
        return CaseSolution(status=sol.status, mip=sol, timings=timings,
                            stage="init", message=sol.message)
    refs = refs_from_point(case, ctx.dv, sol.x)

    # main program: uncertainty, discrete blend, recovery rows
    t0 = time.monotonic()
    prog, ctx = build_program(case, method, policy, eps,
                              refs=refs, fixed_w=fixed_w)
    sol = solve_misocp(prog, settings)
    timings["main"] = time.monotonic() - t0
    if not sol.ok:
        return CaseSolution(status=sol.status, mip=sol, timings=timings,
                            stage="main", message=sol.message)

    pin_bits = {t: [int(round(sol.x[j])) for j in ctx.bea.bits[t]]
                for t in ctx.bea.bits}
    pin_dirs = {key: int(round(sol.x[j])) for key, j in ctx.dirs.items()}
    refs = refs_from_point(case, ctx.dv, sol.x, with_alpha=(policy != "P1"))

    # refinements compete among themselves; the main-stage point is only a
    # fallback for the degenerate case where every refinement fails
    fallback = (sol, ctx)
    best = None
    best_obj = None
    rounds = 0
    converged = False
    for it in range(case.solver.ccp_iters):
        t0 = time.monotonic()
        prog, rctx = build_program(case, method, policy, eps, refs=refs,
                                   pin_bits=pin_bits, pin_dirs=pin_dirs)
        rsol = solve_misocp(prog, settings)
        timings["refine%d" % (it + 1)] = time.monotonic() - t0
        rounds += 1
        if not rsol.ok:
            break
        rel = 0.0 if best is None else \
            (rsol.obj - best_obj) / max(1.0, abs(best_obj))
        if best is None or rel <= case.solver.ccp_tol:
            best, best_obj = (rsol, rctx), rsol.obj
        new_refs = refs_from_point(case, rctx.dv, rsol.x,
                                   with_alpha=(policy != "P1"))
        drift = _ref_drift(refs, new_refs)
        refs = new_refs
        if drift <= case.solver.ccp_tol:
            best, best_obj = (rsol, rctx), rsol.obj
            converged = True
            break

    note = ""
    if best is None:
        best = fallback
        note = "refinement failed; reporting the main-stage point"
    sol, ctx = best
    slack = ctx.penalty.value(sol.x) if ctx.penalty is not None else 0.0
    return CaseSolution(status=sol.status, objective=ctx.objective.value(sol.x),
                        x=sol.x, ctx=ctx, mip=sol, timings=timings,
                        ccp_rounds=rounds, converged=converged,
                        message=note or sol.message, pipe_slack=slack)
