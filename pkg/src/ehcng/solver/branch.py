"""Best-bound branch and bound over the conic relaxation.

Branching is restricted to binaries that actually shape the feasible set
(piecewise grid bits, flow direction switches).  Binaries attached to
repair blocks are never branched: their rows only upper-bound the split
parts, so the complementary split recovered from any relaxation point is
feasible with the same objective, and the repair step rewrites them after
every solve.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ipm import ConicSolution, SolverSettings, solve_relaxation
from .program import presolve

INF = float("inf")


@dataclass
class MipSolution:
    status: str                 # optimal | gap_limit | node_limit | infeasible | time_limit
    x: np.ndarray = None
    obj: float = math.nan
    bound: float = -INF
    gap: float = math.nan
    nodes: int = 0
    iterations: int = 0
    message: str = ""
    relaxation: ConicSolution = None

    @property
    def ok(self):
        return self.status in ("optimal", "gap_limit")


def apply_repairs(prog, x, int_tol=1e-6):
    """Rewrite each split block to the complementary decomposition of a(x)."""
    if not prog.repairs:
        return x
    x = x.copy()
    for rb in prog.repairs:
        a = rb.a_value(x)
        x[rb.pos] = max(a, 0.0)
        x[rb.neg] = max(-a, 0.0)
        x[rb.sbin] = 1.0 if a >= 0.0 else 0.0
    return x


def _fractional(prog, x, int_tol):
    worst, worst_j = 0.0, -1
    for j in prog.branchable():
        f = abs(x[j] - round(x[j]))
        if f > worst + 1e-12:
            worst, worst_j = f, j
    return (worst_j, worst) if worst > int_tol else (-1, 0.0)


def solve_misocp(prog, settings=None):
    """Solve min c'x + x'Qx over the program with its binaries integral."""
    settings = settings or SolverSettings()
    t0 = time.monotonic()
    pre = presolve(prog)
    if pre.status == "infeasible":
        return MipSolution("infeasible", message=pre.message)
    red = pre.program

    lb0, ub0 = red.copy_bounds()
    counter = 0
    heap = []   # (bound, counter, lb, ub, relaxation)
    root_sol = solve_relaxation(red, settings, lb0, ub0)
    if root_sol.status == "primal_infeasible":
        return MipSolution("infeasible", nodes=1, message=root_sol.message)
    if root_sol.status == "dual_infeasible":
        return MipSolution("infeasible", nodes=1,
                           message="relaxation unbounded: " + root_sol.message)
    if not root_sol.ok:
        return MipSolution("numerical", nodes=1,
                           message="root relaxation failed: %s (%s)" %
                                   (root_sol.status, root_sol.message))
    heapq.heappush(heap, (root_sol.obj, counter, lb0, ub0, root_sol))
    counter += 1

    incumbent = None
    inc_obj = INF
    nodes = 0
    iters = 0
    node_failures = 0
    tried_roundings = set()
    status = "optimal"
    pending_bound = None

    def timed_out():
        return settings.time_limit is not None and \
            time.monotonic() - t0 > settings.time_limit

    def prune_level():
        if incumbent is None:
            return INF
        return inc_obj - settings.mip_gap * max(1.0, abs(inc_obj))

    while heap:
        bound, _cnt, lb, ub, sol = heapq.heappop(heap)
        pending_bound = bound
        if bound >= prune_level():
            break
        nodes += 1
        iters += sol.iterations
        if nodes > settings.node_limit:
            status = "node_limit"
            break
        if timed_out():
            status = "time_limit"
            break

        x = apply_repairs(red, sol.x, settings.int_tol)
        j, _f = _fractional(red, x, settings.int_tol)
        if j < 0:
            if sol.obj < inc_obj - 1e-12:
                incumbent, inc_obj = x, sol.obj
            pending_bound = None
            continue

        # rounding dive: fix every branchable to its rounded value
        key = tuple(int(round(x[k])) for k in red.branchable())
        if key not in tried_roundings and nodes % 4 == 1:
            tried_roundings.add(key)
            rlb, rub = lb.copy(), ub.copy()
            for k, v in zip(red.branchable(), key):
                rlb[k] = rub[k] = float(v)
            rsol = solve_relaxation(red, settings, rlb, rub)
            iters += rsol.iterations
            if rsol.ok and rsol.obj < inc_obj - 1e-12:
                incumbent = apply_repairs(red, rsol.x, settings.int_tol)
                inc_obj = rsol.obj

        for side in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            if side == 0.0:
                cub[j] = 0.0
            else:
                clb[j] = 1.0
            csol = solve_relaxation(red, settings, clb, cub)
            iters += csol.iterations
            if csol.status == "primal_infeasible":
                continue
            if not csol.ok:
                node_failures += 1
                continue
            if csol.obj < prune_level():
                heapq.heappush(heap, (csol.obj, counter, clb, cub, csol))
                counter += 1
        pending_bound = None

    open_bounds = [b for b, *_rest in heap]
    if pending_bound is not None:
        open_bounds.append(pending_bound)
    lb_glob = min(open_bounds, default=inc_obj)
    if incumbent is None:
        if status == "optimal" and node_failures == 0:
            return MipSolution("infeasible", nodes=nodes, iterations=iters,
                               message="no integral point found")
        return MipSolution(status if status != "optimal" else "numerical",
                           nodes=nodes, iterations=iters,
                           message="stopped before first incumbent "
                                   "(%d node failures)" % node_failures)

    # polish: re-solve with binaries pinned so the reported point is clean
    plb, pub = red.copy_bounds()
    for jb in red.binaries:
        v = float(round(incumbent[jb]))
        plb[jb] = pub[jb] = v
    polished = solve_relaxation(red, settings, plb, pub)
    iters += polished.iterations
    if polished.ok and polished.obj <= inc_obj + 1e-6 * max(1.0, abs(inc_obj)):
        incumbent = apply_repairs(red, polished.x, settings.int_tol)
        for jb in red.binaries:
            incumbent[jb] = plb[jb]
        inc_obj = polished.obj

    gap = (inc_obj - min(lb_glob, inc_obj)) / max(1.0, abs(inc_obj))
    out = MipSolution(status, x=pre.inflate(incumbent), obj=inc_obj,
                      bound=min(lb_glob, inc_obj), gap=gap, nodes=nodes,
                      iterations=iters, relaxation=root_sol)
    if node_failures:
        out.message = "%d node relaxations failed" % node_failures
    if status == "optimal" and gap > settings.mip_gap + 1e-12:
        out.status = "gap_limit"
    return out
