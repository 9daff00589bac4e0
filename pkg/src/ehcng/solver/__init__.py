"""Built-in mixed-integer second-order cone solver."""
from .program import ConicProgram, ProgramBuilder, RepairBlock, presolve, PresolveResult
from .ipm import ConicSolution, SolverSettings, solve_relaxation, standardize, kkt_audit
from .branch import MipSolution, apply_repairs, solve_misocp

__all__ = [
    "ConicProgram", "ProgramBuilder", "RepairBlock", "presolve", "PresolveResult",
    "ConicSolution", "SolverSettings", "solve_relaxation", "standardize", "kkt_audit",
    "MipSolution", "apply_repairs", "solve_misocp",
]
