"""Mixed-integer conic program container, assembly and presolve.

The canonical form kept here is

    min  c'x + sum_j q_j x_j^2
    s.t. a_i'x  = b_i                (equality rows)
         g_i'x <= h_i                (inequality rows)
         x[head] >= || x[tail] ||_2  (second-order blocks, index tuples)
         lb <= x <= ub,  x_j in {0,1} for marked binaries

Quadratic terms are lifted to second-order blocks during standardisation,
so the interior-point core only ever sees a linear objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INF = float("inf")


@dataclass
class RepairBlock:
    """Complementary split attached to one two-sided condition.

    The pair (pos, neg) decomposes the affine form a(x); both appear only on
    the tightening side of their rows, so any relaxation point can be moved
    to the complementary split (pos, neg) = (a+, a-) without changing
    feasibility or objective.  The attached binary therefore never needs
    branching; it is fixed consistently during repair.
    """

    pos: int
    neg: int
    sbin: int
    a_idx: np.ndarray
    a_coef: np.ndarray
    a_const: float

    def a_value(self, x):
        return float(self.a_const + np.dot(self.a_coef, x[self.a_idx]))


@dataclass
class ConicProgram:
    n: int
    names: list
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    c0: float
    quad: dict
    eq_names: list
    A_idx: list
    A_coef: list
    A_rhs: np.ndarray
    ineq_names: list
    G_idx: list
    G_coef: list
    G_rhs: np.ndarray
    soc: list            # (name, head, [tails])
    binaries: list
    repairs: list = field(default_factory=list)
    no_branch: set = field(default_factory=set)
    col_scale: np.ndarray = None

    @property
    def n_eq(self):
        return len(self.A_rhs)

    @property
    def n_ineq(self):
        return len(self.G_rhs)

    def branchable(self):
        return [j for j in self.binaries if j not in self.no_branch]

    def objective_value(self, x):
        v = self.c0 + float(np.dot(self.c, x))
        for j, q in self.quad.items():
            v += q * x[j] * x[j]
        return v

    def copy_bounds(self):
        return self.lb.copy(), self.ub.copy()

    def dump_text(self, path):
        """Write the program in the plain-text conic format (see docs)."""
        with open(path, "w") as fh:
            fh.write("conic-program v1\n")
            fh.write("vars %d\n" % self.n)
            for j in range(self.n):
                fh.write("V %d %s %s %s %s\n" % (
                    j, self.names[j], _num(self.lb[j]), _num(self.ub[j]),
                    "B" if j in set(self.binaries) else "C"))
            fh.write("objconst %s\n" % _num(self.c0))
            for j in np.nonzero(self.c)[0]:
                fh.write("O %d %s\n" % (j, _num(self.c[j])))
            for j in sorted(self.quad):
                fh.write("Q %d %s\n" % (j, _num(self.quad[j])))
            for name, idx, coef, rhs in zip(self.eq_names, self.A_idx, self.A_coef, self.A_rhs):
                fh.write("EQ %s %s %s\n" % (name, _num(rhs), _terms(idx, coef)))
            for name, idx, coef, rhs in zip(self.ineq_names, self.G_idx, self.G_coef, self.G_rhs):
                fh.write("LE %s %s %s\n" % (name, _num(rhs), _terms(idx, coef)))
            for name, head, tails in self.soc:
                fh.write("SOC %s %d %d %s\n" % (name, head, len(tails),
                                                " ".join(str(t) for t in tails)))
            fh.write("end\n")


def _num(v):
    if v == INF:
        return "inf"
    if v == -INF:
        return "-inf"
    return repr(float(v))


def _terms(idx, coef):
    parts = ["%d" % len(idx)]
    for j, c in zip(idx, coef):
        parts.append("%d:%s" % (j, _num(c)))
    return " ".join(parts)


class ProgramBuilder:
    """Collects rows, cones and the objective, then freezes a ConicProgram.

    Rows enter in any order and are stable-sorted by name at build time so
    repeated assemblies of the same model are bit-identical.
    """

    def __init__(self, dv):
        self.dv = dv
        self._eq = []        # (name, LinearExpr) meaning expr == 0
        self._ineq = []      # (name, LinearExpr) meaning expr <= 0
        self._soc = []       # (name, head idx, [tail idx])
        self._names = set()
        self.repairs = []
        self.no_branch = set()
        self.objective = None

    def _claim(self, name):
        if name in self._names:
            raise ValueError("duplicate program row %r" % name)
        self._names.add(name)

    def add_eq(self, name, expr):
        self._claim(name)
        self._eq.append((name, expr))

    def add_ineq(self, name, expr):
        self._claim(name)
        self._ineq.append((name, expr))

    def add_soc(self, name, head_idx, tail_idx):
        self._claim(name)
        self._soc.append((name, int(head_idx), [int(t) for t in tail_idx]))

    def soc_over_exprs(self, name, head_expr, tail_exprs):
        """Cone over affine expressions; members that are not plain variables
        get a defining auxiliary so the stored block stays an index tuple."""
        head = self._materialize(name + ".h", head_expr)
        tails = [self._materialize("%s.t%d" % (name, k), e)
                 for k, e in enumerate(tail_exprs)]
        self.add_soc(name, head, tails)

    def _materialize(self, name, expr):
        from .. import model as _m
        if isinstance(expr, (int, np.integer)):
            return int(expr)
        if len(expr.terms) == 1 and expr.const == 0.0:
            (j, c), = expr.terms.items()
            if c == 1.0:
                return j
        j = self.dv.add("aux", name, None, -INF, INF)
        self.add_eq(name + ".def", _m.LinearExpr.term(j, -1.0) + expr)
        return j

    def add_constraint_set(self, cset, prefix=""):
        for r in cset.eq:
            self.add_eq(prefix + r.name, r.expr)
        for r in cset.ineq:
            self.add_ineq(prefix + r.name, r.expr)

    def set_objective(self, quad_expr):
        self.objective = quad_expr

    def add_repair(self, pos, neg, sbin, a_expr):
        idx, coef, const = a_expr.arrays()
        self.repairs.append(RepairBlock(pos, neg, sbin, idx, coef, const))
        self.no_branch.add(sbin)

    def build(self):
        dv = self.dv
        n = dv.size
        c = np.zeros(n)
        c0 = 0.0
        quad = {}
        if self.objective is not None:
            for j, v in self.objective.lin.terms.items():
                c[j] += v
            c0 = self.objective.lin.const
            quad = dict(self.objective.quad)

        eq_names, A_idx, A_coef, A_rhs = [], [], [], []
        for name, expr in sorted(self._eq, key=lambda p: p[0]):
            idx, coef, const = expr.arrays()
            order = np.argsort(idx, kind="stable")
            eq_names.append(name)
            A_idx.append(idx[order])
            A_coef.append(coef[order])
            A_rhs.append(-const)
        ineq_names, G_idx, G_coef, G_rhs = [], [], [], []
        for name, expr in sorted(self._ineq, key=lambda p: p[0]):
            idx, coef, const = expr.arrays()
            order = np.argsort(idx, kind="stable")
            ineq_names.append(name)
            G_idx.append(idx[order])
            G_coef.append(coef[order])
            G_rhs.append(-const)

        prog = ConicProgram(
            n=n, names=list(dv.names), lb=dv.lb(), ub=dv.ub(),
            c=c, c0=c0, quad=quad,
            eq_names=eq_names, A_idx=A_idx, A_coef=A_coef,
            A_rhs=np.asarray(A_rhs, dtype=float),
            ineq_names=ineq_names, G_idx=G_idx, G_coef=G_coef,
            G_rhs=np.asarray(G_rhs, dtype=float),
            soc=sorted(self._soc, key=lambda s: s[0]),
            binaries=sorted(dv.binaries()),
            repairs=self.repairs,
            no_branch=set(self.no_branch),
        )
        prog.col_scale = _column_scale(prog)
        return prog


def _column_scale(prog):
    """Geometric-mean magnitude per column, used as the scaling seed."""
    maxa = np.ones(prog.n)
    mina = np.ones(prog.n)
    seen = np.zeros(prog.n, dtype=bool)
    for idx, coef in zip(prog.A_idx + prog.G_idx, prog.A_coef + prog.G_coef):
        for j, a in zip(idx, coef):
            a = abs(a)
            if a == 0.0:
                continue
            if not seen[j]:
                maxa[j] = mina[j] = a
                seen[j] = True
            else:
                maxa[j] = max(maxa[j], a)
                mina[j] = min(mina[j], a)
    return np.sqrt(maxa * mina)


@dataclass
class PresolveResult:
    program: ConicProgram
    status: str                  # "reduced" or "infeasible"
    fixed: dict                  # original idx -> value
    keep: np.ndarray             # original indices kept, or None
    dropped_rows: int = 0
    message: str = ""

    def inflate(self, x_red):
        if self.keep is None:
            return x_red
        x = np.zeros(len(self.keep) + len(self.fixed))
        x[self.keep] = x_red
        for j, v in self.fixed.items():
            x[j] = v
        return x


def presolve(prog, tol=1e-12):
    """Remove variables pinned by equal bounds and rows that became empty.

    Variables referenced by cones, binaries or repair blocks are left in
    place (their equal bounds are handled as equality rows downstream), so
    the reduction is purely linear bookkeeping and exactly invertible.
    """
    protected = set(prog.binaries)
    for _, head, tails in prog.soc:
        protected.add(head)
        protected.update(tails)
    for rb in prog.repairs:
        protected.add(rb.pos)
        protected.add(rb.neg)
        protected.add(rb.sbin)
        protected.update(int(j) for j in rb.a_idx)
    protected.update(prog.quad.keys())

    span = prog.ub - prog.lb
    if np.any(span < -tol):
        return PresolveResult(prog, "infeasible", {}, None,
                              message="crossed variable bounds")
    fixed = {}
    for j in range(prog.n):
        if span[j] <= tol and j not in protected:
            fixed[j] = 0.5 * (prog.lb[j] + prog.ub[j])
    if not fixed:
        return PresolveResult(prog, "reduced", {}, None)

    keep = np.array([j for j in range(prog.n) if j not in fixed], dtype=np.int64)
    remap = -np.ones(prog.n, dtype=np.int64)
    remap[keep] = np.arange(len(keep))

    def reduce_rows(names, idxs, coefs, rhs, is_eq):
        out_n, out_i, out_c, out_r = [], [], [], []
        dropped = 0
        for name, idx, coef, r in zip(names, idxs, coefs, rhs):
            shift = 0.0
            mask = np.ones(len(idx), dtype=bool)
            for k, j in enumerate(idx):
                if j in fixed:
                    shift += coef[k] * fixed[j]
                    mask[k] = False
            idx2 = remap[idx[mask]]
            coef2 = coef[mask]
            r2 = r - shift
            if len(idx2) == 0:
                dropped += 1
                bad = abs(r2) > 1e-9 if is_eq else r2 < -1e-9
                if bad:
                    return None, None, None, None, dropped, name
                continue
            out_n.append(name)
            out_i.append(idx2)
            out_c.append(coef2)
            out_r.append(r2)
        return out_n, out_i, out_c, np.asarray(out_r, dtype=float), dropped, None

    en, ei, ec, er, d1, bad1 = reduce_rows(prog.eq_names, prog.A_idx, prog.A_coef,
                                           prog.A_rhs, True)
    if bad1 is not None:
        return PresolveResult(prog, "infeasible", fixed, None,
                              message="contradiction in row %s" % bad1)
    gn, gi, gc, gr, d2, bad2 = reduce_rows(prog.ineq_names, prog.G_idx, prog.G_coef,
                                           prog.G_rhs, False)
    if bad2 is not None:
        return PresolveResult(prog, "infeasible", fixed, None,
                              message="contradiction in row %s" % bad2)

    c_red = prog.c[keep]
    c0 = prog.c0 + sum(prog.c[j] * v for j, v in fixed.items())
    red = ConicProgram(
        n=len(keep), names=[prog.names[j] for j in keep],
        lb=prog.lb[keep], ub=prog.ub[keep],
        c=c_red, c0=c0,
        quad={int(remap[j]): q for j, q in prog.quad.items()},
        eq_names=en, A_idx=ei, A_coef=ec, A_rhs=er,
        ineq_names=gn, G_idx=gi, G_coef=gc, G_rhs=gr,
        soc=[(nm, int(remap[h]), [int(remap[t]) for t in tl]) for nm, h, tl in prog.soc],
        binaries=[int(remap[j]) for j in prog.binaries],
        repairs=[RepairBlock(int(remap[rb.pos]), int(remap[rb.neg]), int(remap[rb.sbin]),
                             remap[rb.a_idx].astype(np.int64), rb.a_coef.copy(), rb.a_const)
                 for rb in prog.repairs],
        no_branch={int(remap[j]) for j in prog.no_branch},
    )
    red.col_scale = _column_scale(red)
    return PresolveResult(red, "reduced", fixed, keep, dropped_rows=d1 + d2)
