"""Decision vector, affine expressions and the dispatch constraint registry.

Everything downstream (condition generation, convexification, the conic
assembler) works on integer variable indices handed out by DecisionVector,
so expressions stay cheap dictionaries and the solver never sees names.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INF = float("inf")


class LinearExpr:
    """Sparse affine expression  sum_j coef_j * x_j + const."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def constant(cls, c):
        return cls(None, c)

    @classmethod
    def term(cls, idx, coef=1.0, const=0.0):
        return cls({int(idx): float(coef)}, const)

    def copy(self):
        return LinearExpr(self.terms, self.const)

    def add_term(self, idx, coef):
        """In-place accumulate coef * x_idx."""
        idx = int(idx)
        c = self.terms.get(idx, 0.0) + float(coef)
        if c == 0.0:
            self.terms.pop(idx, None)
        else:
            self.terms[idx] = c
        return self

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinearExpr):
            out.const += other.const
            for j, c in other.terms.items():
                out.add_term(j, c)
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinearExpr({j: -c for j, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        if isinstance(other, LinearExpr):
            return self + (-other)
        return self + (-float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, k):
        k = float(k)
        if k == 0.0:
            return LinearExpr()
        return LinearExpr({j: c * k for j, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def value(self, x):
        return self.const + sum(c * x[j] for j, c in self.terms.items())

    def interval(self, lb, ub):
        """Range of the expression over the variable box [lb, ub]."""
        lo = hi = self.const
        for j, c in self.terms.items():
            if c >= 0.0:
                lo += c * lb[j]
                hi += c * ub[j]
            else:
                lo += c * ub[j]
                hi += c * lb[j]
        return lo, hi

    def arrays(self):
        idx = np.fromiter(self.terms.keys(), dtype=np.int64, count=len(self.terms))
        coef = np.fromiter(self.terms.values(), dtype=np.float64, count=len(self.terms))
        return idx, coef, self.const

    def is_zero(self, tol=0.0):
        return abs(self.const) <= tol and all(abs(c) <= tol for c in self.terms.values())

    def canonical_key(self):
        """Hashable form used to share sign splits between mirrored conditions."""
        items = tuple(sorted((j, round(c, 12)) for j, c in self.terms.items()))
        return items, round(self.const, 12)

    def __repr__(self):
        bits = " + ".join("%g*x%d" % (c, j) for j, c in sorted(self.terms.items()))
        return "LinearExpr(%s + %g)" % (bits or "0", self.const)


class QuadExpr:
    """Diagonal convex quadratic  sum_j q_j x_j^2  plus an affine part."""

    __slots__ = ("quad", "lin")

    def __init__(self):
        self.quad = {}
        self.lin = LinearExpr()

    def add_quad(self, idx, coef):
        if coef < 0:
            raise ValueError("quadratic objective coefficients must be nonnegative")
        if coef:
            self.quad[int(idx)] = self.quad.get(int(idx), 0.0) + float(coef)
        return self

    def add_linear(self, expr_or_idx, coef=None):
        if isinstance(expr_or_idx, LinearExpr):
            self.lin = self.lin + expr_or_idx
        else:
            self.lin.add_term(expr_or_idx, coef)
        return self

    def add_const(self, c):
        self.lin.const += float(c)
        return self

    def value(self, x):
        return self.lin.value(x) + sum(q * x[j] * x[j] for j, q in self.quad.items())


class DecisionVector:
    """Registry of every scheduled quantity, affine factor and auxiliary.

    Each entry carries (kind, component id, time index) so reports and the
    program dump stay readable; indices are dense and stable in registration
    order.
    """

    def __init__(self):
        self.names = []
        self.kinds = []
        self.comps = []
        self.times = []
        self._lb = []
        self._ub = []
        self.binary = []
        self._by_name = {}
        self._by_key = {}

    @property
    def size(self):
        return len(self.names)

    @staticmethod
    def _mk_name(kind, comp, t):
        inside = []
        if comp is not None:
            inside.append(str(comp))
        if t is not None:
            inside.append("t%d" % t)
        return "%s[%s]" % (kind, ",".join(inside)) if inside else kind

    def add(self, kind, comp=None, t=None, lb=-INF, ub=INF, binary=False):
        name = self._mk_name(kind, comp, t)
        if name in self._by_name:
            raise ValueError("duplicate decision variable %r" % name)
        if binary:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise ValueError("empty bounds for %r: [%g, %g]" % (name, lb, ub))
        idx = len(self.names)
        self.names.append(name)
        self.kinds.append(kind)
        self.comps.append(comp)
        self.times.append(t)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self.binary.append(bool(binary))
        self._by_name[name] = idx
        self._by_key[(kind, comp, t)] = idx
        return idx

    def find(self, kind, comp=None, t=None):
        return self._by_key[(kind, comp, t)]

    def has(self, kind, comp=None, t=None):
        return (kind, comp, t) in self._by_key

    def by_name(self, name):
        return self._by_name[name]

    def name(self, idx):
        return self.names[idx]

    def expr(self, kind, comp=None, t=None):
        return LinearExpr.term(self.find(kind, comp, t))

    def lb(self):
        return np.asarray(self._lb, dtype=float)

    def ub(self):
        return np.asarray(self._ub, dtype=float)

    def set_bounds(self, idx, lb=None, ub=None):
        if lb is not None:
            self._lb[idx] = float(lb)
        if ub is not None:
            self._ub[idx] = float(ub)
        if self._lb[idx] > self._ub[idx]:
            raise ValueError("empty bounds for %r" % self.names[idx])

    def fix(self, idx, value):
        self._lb[idx] = self._ub[idx] = float(value)

    def binaries(self):
        return [j for j, b in enumerate(self.binary) if b]

    def point_named(self, x):
        return {self.names[j]: float(x[j]) for j in range(self.size)}


# ---------------------------------------------------------------------------
# constraint registry


@dataclass
class Row:
    name: str
    tag: str
    expr: LinearExpr  # eq rows: expr == 0; ineq rows: expr <= 0


class RawEquation:
    """Nonconvex equation kept verbatim for post-solve residual audits.

    residual(x) returns lhs - rhs; rel_residual normalises by
    max(1, |lhs|, |rhs|) so small-signal equations are judged on an
    absolute footing while flow-scale equations are judged relatively.
    """

    name = ""
    tag = ""

    def sides(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def residual(self, x):
        lhs, rhs = self.sides(x)
        return lhs - rhs

    def rel_residual(self, x):
        lhs, rhs = self.sides(x)
        return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


class RawProduct(RawEquation):
    """left(x) * factor(x) == right(x), all affine. Covers the HVF mixing
    recursion and the heat-content couplings after clearing denominators."""

    def __init__(self, name, tag, left, factor, right):
        self.name = name
        self.tag = tag
        self.left = left
        self.factor = factor
        self.right = right

    def sides(self, x):
        return self.left.value(x) * self.factor.value(x), self.right.value(x)


class RawHvfMix(RawEquation):
    """Cleared mixing recursion for the hydrogen volume fraction:

        w_t * (supply + discharge + stored) == discharge + w_prev * stored

    where stored is the previous-period line pack sum. w_prev is a variable
    index for interior periods and the initial fraction constant for t=1.
    """

    def __init__(self, name, tag, i_w, supply, discharge, stored, i_wprev=None, w0=0.0):
        self.name = name
        self.tag = tag
        self.i_w = i_w
        self.supply = supply
        self.discharge = discharge
        self.stored = stored
        self.i_wprev = i_wprev
        self.w0 = w0

    def sides(self, x):
        wprev = x[self.i_wprev] if self.i_wprev is not None else self.w0
        dch = self.discharge.value(x)
        lp = self.stored.value(x)
        lhs = x[self.i_w] * (self.supply.value(x) + dch + lp)
        return lhs, dch + wprev * lp


class RawWeymouth(RawEquation):
    """F^2 == sign(F) * C(w) * (pm^2 - pn^2) with C = c0 * m0 / M(w)."""

    def __init__(self, name, tag, i_f, i_pm, i_pn, i_molar, c0, m_ref):
        self.name = name
        self.tag = tag
        self.i_f = i_f
        self.i_pm = i_pm
        self.i_pn = i_pn
        self.i_molar = i_molar
        self.c0 = c0
        self.m_ref = m_ref

    def coeff(self, x):
        return self.c0 * self.m_ref / x[self.i_molar]

    def sides(self, x):
        f = x[self.i_f]
        c = self.coeff(x)
        return f * f, math.copysign(1.0, f) * c * (x[self.i_pm] ** 2 - x[self.i_pn] ** 2)


class RawAdjWeymouth(RawEquation):
    """Second-order consistency of the adjusted flow with the pipe equation:
    aF^2 == sign(F) * C(w) * (apm^2 - apn^2)."""

    def __init__(self, name, tag, i_af, i_apm, i_apn, i_f, i_molar, c0, m_ref):
        self.name = name
        self.tag = tag
        self.i_af = i_af
        self.i_apm = i_apm
        self.i_apn = i_apn
        self.i_f = i_f
        self.i_molar = i_molar
        self.c0 = c0
        self.m_ref = m_ref

    def sides(self, x):
        c = self.c0 * self.m_ref / x[self.i_molar]
        sgn = math.copysign(1.0, x[self.i_f])
        return x[self.i_af] ** 2, sgn * c * (x[self.i_apm] ** 2 - x[self.i_apn] ** 2)


class RawAdjFlowPressure(RawEquation):
    """First-order consistency: aF * F == sign(F) * C(w) * (apm*pm - apn*pn)."""

    def __init__(self, name, tag, i_af, i_f, i_apm, i_pm, i_apn, i_pn, i_molar, c0, m_ref):
        self.name = name
        self.tag = tag
        self.i_af = i_af
        self.i_f = i_f
        self.i_apm = i_apm
        self.i_pm = i_pm
        self.i_apn = i_apn
        self.i_pn = i_pn
        self.i_molar = i_molar
        self.c0 = c0
        self.m_ref = m_ref

    def sides(self, x):
        c = self.c0 * self.m_ref / x[self.i_molar]
        sgn = math.copysign(1.0, x[self.i_f])
        lhs = x[self.i_af] * x[self.i_f]
        rhs = sgn * c * (x[self.i_apm] * x[self.i_pm] - x[self.i_apn] * x[self.i_pn])
        return lhs, rhs


class ConstraintSet:
    """Named linear rows plus the registry of raw nonconvex equations."""

    def __init__(self):
        self.eq = []
        self.ineq = []
        self.raw = []
        self._names = set()

    def _check(self, name):
        if name in self._names:
            raise ValueError("duplicate constraint name %r" % name)
        self._names.add(name)

    def add_eq(self, name, tag, expr):
        self._check(name)
        self.eq.append(Row(name, tag, expr))

    def add_ineq(self, name, tag, expr):
        """expr <= 0."""
        self._check(name)
        self.ineq.append(Row(name, tag, expr))

    def add_range(self, name, tag, expr, lo, hi):
        self.add_ineq(name + ".hi", tag, expr - hi)
        self.add_ineq(name + ".lo", tag, lo - expr)

    def add_raw(self, raw):
        self._check(raw.name)
        self.raw.append(raw)

    def count_tag(self, tag):
        return sum(1 for r in self.eq if r.tag == tag) + \
            sum(1 for r in self.ineq if r.tag == tag) + \
            sum(1 for r in self.raw if r.tag == tag)

    def merge(self, other):
        for r in other.eq:
            self.add_eq(r.name, r.tag, r.expr)
        for r in other.ineq:
            self.add_ineq(r.name, r.tag, r.expr)
        for r in other.raw:
            self.add_raw(r)
        return self


@dataclass
class ResidualReport:
    eq: dict = field(default_factory=dict)
    ineq_slack: dict = field(default_factory=dict)
    box_slack: dict = field(default_factory=dict)
    raw_abs: dict = field(default_factory=dict)
    raw_rel: dict = field(default_factory=dict)

    @property
    def max_eq(self):
        return max((abs(v) for v in self.eq.values()), default=0.0)

    @property
    def min_slack(self):
        vals = list(self.ineq_slack.values()) + list(self.box_slack.values())
        return min(vals, default=0.0)

    @property
    def max_raw_rel(self):
        return max(self.raw_rel.values(), default=0.0)

    def worst_eq(self):
        return max(self.eq, key=lambda k: abs(self.eq[k]), default=None) if self.eq else None

    def worst_ineq(self):
        pool = dict(self.ineq_slack)
        pool.update(self.box_slack)
        return min(pool, key=pool.get) if pool else None

    def worst_raw(self):
        return max(self.raw_rel, key=self.raw_rel.get) if self.raw_rel else None

    def summary(self):
        lines = ["max equality residual %.3e (%s)"
                 % (self.max_eq, self.worst_eq()),
                 "min inequality slack %.3e (%s)"
                 % (self.min_slack, self.worst_ineq())]
        if self.raw_rel:
            lines.append("max raw relative residual %.3e (%s)"
                         % (self.max_raw_rel, self.worst_raw()))
        return "\n".join(lines)


def eval_residuals(dv, cset, x, skip_raw_tags=()):
    """Audit a point against the registry: signed equality residuals,
    inequality and box slacks (negative means violated), and raw-equation
    residuals in absolute and relative form."""
    x = np.asarray(x, dtype=float)
    rep = ResidualReport()
    for r in cset.eq:
        rep.eq[r.name] = r.expr.value(x)
    for r in cset.ineq:
        rep.ineq_slack[r.name] = -r.expr.value(x)
    lb, ub = dv.lb(), dv.ub()
    for j in range(dv.size):
        lo = x[j] - lb[j] if lb[j] > -INF else INF
        hi = ub[j] - x[j] if ub[j] < INF else INF
        s = min(lo, hi)
        if s < INF:
            rep.box_slack[dv.name(j)] = s
    for raw in cset.raw:
        if raw.tag in skip_raw_tags:
            continue
        rep.raw_abs[raw.name] = raw.residual(x)
        rep.raw_rel[raw.name] = raw.rel_residual(x)
    return rep
