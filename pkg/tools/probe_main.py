"""Stage-by-stage inspection of the desk main program."""
import sys
import time

sys.path.insert(0, "src")

import numpy as np

from ehcng.case import load_case
from ehcng.convexify import refs_from_point
from ehcng.pipeline import build_program
from ehcng.solver.branch import solve_misocp
from ehcng.solver.ipm import SolverSettings, solve_relaxation
from ehcng.solver.program import presolve

case = load_case("src/ehcng/data/desk5x7.json")

t0 = time.time()
prog, ctx = build_program(case, "MP", "P1", None, fixed_w=case.hcng.hvf.initial)
sol = solve_misocp(prog, SolverSettings(mip_gap=case.solver.mip_gap,
                                        node_limit=case.solver.node_limit))
print("init:", sol.status, sol.obj, "%.1fs" % (time.time() - t0))
refs = refs_from_point(case, ctx.dv, sol.x)

t0 = time.time()
prog, ctx = build_program(case, "MP", "PP", None, refs=refs)
print("main program: %d cols %d eq %d ineq %d soc %d bins" %
      (prog.n, len(prog.eq_names), len(prog.ineq_names), len(prog.soc),
       len(prog.binaries)))
pre = presolve(prog)
print("presolve:", pre.status, "kept", pre.program.n, "fixed", len(pre.fixed))
rsol = solve_relaxation(pre.program, SolverSettings(verbose=2, max_iter=150))
print("root:", rsol.status, rsol.message, "pres %.2e dres %.2e gap %.2e"
      % (rsol.pres, rsol.dres, rsol.relgap), "%.1fs" % (time.time() - t0))
