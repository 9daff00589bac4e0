"""Joint chance constraint decompositions over the affine conditions.

A condition a(x) * z_t <= b(x) with sign-indefinite a(x) is split as

    a = (a+ + delta) - (a- + delta),     a+, a- >= 0,  a+ * a- = 0,

which sorts every condition into two one-sided families with strictly
positive coefficients.  Within one family the violation events are nested
tails of z, so holding every member at eps/2 holds the family jointly at
eps/2 and the original joint constraint at eps; no per-condition budget
division is needed.  The complementarity binaries never require branching:
the split parts appear only on the tightening side of their rows, so any
relaxation point can be rewritten to the complementary split without
losing feasibility or objective, and the solver's repair step does exactly
that.

The same splitting machinery also hosts the comparison methods: averaged
per-condition budgets, the per-condition outer approximation (no joint
guarantee), a Gaussian-quantile variant and the plain moment-set radius.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambiguity import drcc_radius, gaussian_z, moment_radius
from .model import LinearExpr

DELTA_REL = 1e-4
DELTA_FLOOR = 1e-6

METHODS = ("MP", "M1", "M2", "M3", "M4")


@dataclass
class SignSplit:
    """Bookkeeping for one condition's sign treatment."""
    name: str
    sign: str            # "free", "pos" or "neg"
    pos: int = -1
    neg: int = -1
    sbin: int = -1
    delta: float = 0.0


@dataclass
class DecompositionReport:
    method: str
    epsilon: float
    n_conditions: int
    n_split: int
    n_certified_pos: int
    n_certified_neg: int
    risk_side: float
    risk_single: float
    radius_side: float
    radius_single: float
    joint_guarantee: bool
    note: str = ""

    def summary(self):
        lines = [
            "method %s at epsilon %.4g over %d conditions" % (
                self.method, self.epsilon, self.n_conditions),
            "  split %d, sign-certified %d positive / %d negative" % (
                self.n_split, self.n_certified_pos, self.n_certified_neg),
            "  per-side risk %.6g (radius %.6g), single-row risk %.6g (radius %.6g)" % (
                self.risk_side, self.radius_side, self.risk_single, self.radius_single),
            "  joint guarantee: %s" % ("yes" if self.joint_guarantee else
                                       "NO (per-condition only)"),
        ]
        if self.note:
            lines.append("  " + self.note)
        return "\n".join(lines)


def allocate_report(conds):
    """Condition counts per tag, plus the total."""
    out = {}
    for c in conds:
        out[c.tag] = out.get(c.tag, 0) + 1
    out["total"] = len(conds)
    return out


def _tight_expr(a_expr, b_expr, radius, sigma, mean):
    return (radius * sigma + mean) * a_expr - b_expr


def _emit(builder, conds, amb, risk_side, risk_single, radius_fn):
    """Shared emission: sign analysis, split registration, tightened rows."""
    dv = builder.dv
    lb, ub = dv.lb(), dv.ub()
    r_side = radius_fn(risk_side)
    r_single = radius_fn(risk_single)
    splits = []
    n_pos = n_neg = n_free = 0
    for cond in sorted(conds, key=lambda c: c.name):
        sig = amb.sigma_e(cond.t - 1)
        m = amb.mean_e(cond.t - 1)
        lo, hi = cond.a.interval(lb, ub)
        if lo >= 0.0:
            n_pos += 1
            splits.append(SignSplit(cond.name, "pos"))
            builder.add_ineq(cond.name + ".tight",
                             _tight_expr(cond.a, cond.b, r_single, sig, m))
            continue
        if hi <= 0.0:
            n_neg += 1
            splits.append(SignSplit(cond.name, "neg"))
            builder.add_ineq(cond.name + ".tight",
                             _tight_expr(-1.0 * cond.a, cond.b, r_single, sig, -m))
            continue
        n_free += 1
        delta = max(DELTA_REL * max(abs(lo), abs(hi)), DELTA_FLOOR)
        pos = dv.add("aPos", cond.name, None, 0.0, hi)
        neg = dv.add("aNeg", cond.name, None, 0.0, -lo)
        sbin = dv.add("aSgn", cond.name, None, binary=True)
        splits.append(SignSplit(cond.name, "free", pos, neg, sbin, delta))
        expr = cond.a.copy()
        expr.add_term(pos, -1.0)
        expr.add_term(neg, 1.0)
        builder.add_eq(cond.name + ".split", expr)
        builder.add_ineq(cond.name + ".cap+",
                         LinearExpr.term(pos) - hi * LinearExpr.term(sbin))
        builder.add_ineq(cond.name + ".cap-",
                         LinearExpr.term(neg, 1.0, lo) - lo * LinearExpr.term(sbin))
        builder.add_repair(pos, neg, sbin, cond.a)
        builder.add_ineq(cond.name + ".pos",
                         _tight_expr(LinearExpr.term(pos, 1.0, delta), cond.b,
                                     r_side, sig, m))
        builder.add_ineq(cond.name + ".neg",
                         _tight_expr(LinearExpr.term(neg, 1.0, delta), cond.b,
                                     r_side, sig, -m))
    return splits, n_pos, n_neg, n_free, r_side, r_single


def decompose_proposed(builder, conds, amb, eps):
    """Two nested one-sided families, each held at eps/2."""
    rf = lambda r: drcc_radius(amb, r)
    sp, npos, nneg, nfree, rs, r1 = _emit(builder, conds, amb, eps / 2, eps / 2, rf)
    return DecompositionReport("MP", eps, len(conds), nfree, npos, nneg,
                               eps / 2, eps / 2, rs, r1, True), sp


def decompose_bonferroni(builder, conds, amb, eps):
    """Averaged per-condition budgets: eps/N each, split sides at eps/(2N)."""
    n = max(len(conds), 1)
    rf = lambda r: drcc_radius(amb, r)
    sp, npos, nneg, nfree, rs, r1 = _emit(builder, conds, amb,
                                          eps / (2 * n), eps / n, rf)
    return DecompositionReport("M1", eps, len(conds), nfree, npos, nneg,
                               eps / (2 * n), eps / n, rs, r1, True), sp


def decompose_outer(builder, conds, amb, eps):
    """Per-condition sides at the full eps: an outer relaxation of the
    joint constraint, kept for bounding; it certifies nothing jointly."""
    rf = lambda r: drcc_radius(amb, r)
    sp, npos, nneg, nfree, rs, r1 = _emit(builder, conds, amb, eps, eps, rf)
    return DecompositionReport("M2", eps, len(conds), nfree, npos, nneg,
                               eps, eps, rs, r1, False,
                               note="outer relaxation, no joint guarantee"), sp


def decompose_gaussian(builder, conds, amb, eps):
    """Nominal-Gaussian quantile tightening with the same split machinery.

    Ignores the moment budgets, so it undershoots whenever the realized
    distribution is wider than the nominal one."""
    rf = lambda r: gaussian_z(r)
    sp, npos, nneg, nfree, rs, r1 = _emit(builder, conds, amb, eps / 2, eps / 2, rf)
    return DecompositionReport("M3", eps, len(conds), nfree, npos, nneg,
                               eps / 2, eps / 2, rs, r1, False,
                               note="nominal quantile, robust only in-sample"), sp


def decompose_moment(builder, conds, amb, eps):
    """Mean-covariance ambiguity radius (no unimodality information)."""
    rf = lambda r: moment_radius(amb.gamma1, amb.gamma2, r)
    sp, npos, nneg, nfree, rs, r1 = _emit(builder, conds, amb, eps / 2, eps / 2, rf)
    return DecompositionReport("M4", eps, len(conds), nfree, npos, nneg,
                               eps / 2, eps / 2, rs, r1, True), sp


_DISPATCH = {
    "MP": decompose_proposed,
    "M1": decompose_bonferroni,
    "M2": decompose_outer,
    "M3": decompose_gaussian,
    "M4": decompose_moment,
}


def decompose(builder, conds, amb, eps, method="MP"):
    """Add the robust rows for the given method; returns (report, splits)."""
    key = str(method).upper()
    if key not in _DISPATCH:
        raise ValueError("unknown method %r (have %s)" % (method, ", ".join(METHODS)))
    if not 0.0 < eps < 1.0:
        raise ValueError("epsilon must lie in (0, 1), got %r" % eps)
    return _DISPATCH[key](builder, conds, amb, eps)


# ---------------------------------------------------------------------------
# nested-family feasibility, two independent routes

def family_feasible_inf(ps, bs, bound):
    """Joint robust feasibility of {p_i * z <= b_i}, p_i >= 0, via the
    worst member: within one nested family the binding threshold carries
    the entire joint risk."""
    ps = np.asarray(ps, dtype=float)
    bs = np.asarray(bs, dtype=float)
    if np.any(ps < 0):
        raise ValueError("family coefficients must be nonnegative")
    idle = ps == 0.0
    if np.any(bs[idle] < 0):
        return False
    if np.all(idle):
        return True
    return float(np.min(bs[~idle] / ps[~idle])) >= bound


def family_feasible_rows(ps, bs, bound):
    """Same verdict, row by row: every member tightened by the same bound."""
    ps = np.asarray(ps, dtype=float)
    bs = np.asarray(bs, dtype=float)
    if np.any(ps < 0):
        raise ValueError("family coefficients must be nonnegative")
    return bool(np.all(bs - ps * bound >= 0.0))
