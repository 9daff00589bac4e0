"""Convex treatment of the fraction-coupled gas physics.

The hydrogen volume fraction enters every nonconvex equation through the
mixture molar mass M(w) = M0 * (1 - mu * w).  Expanding w over a binary
grid makes every product with w exactly linearizable; the remaining
quadratic structure (pipe equation, response consistency) is handled with
a second-order cone on the pressure-loss side, a reference linearization
on the recovery side, and McCormick envelopes for the variable-variable
products of the response relations.  The raw equations stay registered in
the model for post-solve audits; nothing here touches them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import LinearExpr

INF = float("inf")


def molar_slope(case):
    gc = case.hcng.gas_constants
    return (gc.molar_gas - gc.molar_hy) / gc.molar_gas


class _Intervals:
    """Interval arithmetic over the current variable box, refreshed lazily."""

    def __init__(self, dv):
        self.dv = dv
        self._n = -1

    def of(self, expr):
        if self.dv.size != self._n:
            self._lb, self._ub = self.dv.lb(), self.dv.ub()
            self._n = self.dv.size
        return expr.interval(self._lb, self._ub)


# ---------------------------------------------------------------------------
# binary expansion of the fraction and exact product links


@dataclass
class BeaBits:
    delta_w: float
    depth: int
    bits: dict = field(default_factory=dict)    # t -> [bit indices]

    def grid(self):
        if self.delta_w == 0.0:
            return [0.0]
        return [self.delta_w * v for v in range(2 ** self.depth)]

    def snap(self, w):
        """Nearest achievable fraction."""
        if self.delta_w == 0.0:
            return 0.0
        step = round(w / self.delta_w)
        step = min(max(step, 0), 2 ** self.depth - 1)
        return self.delta_w * step

    def fix(self, dv, t, w):
        """Pin period t's bits to the pattern encoding the snapped w."""
        step = 0 if self.delta_w == 0.0 else \
            int(round(self.snap(w) / self.delta_w))
        for k, j in enumerate(self.bits[t]):
            dv.fix(j, float((step >> k) & 1))


def binary_expand(builder, case):
    """Grid the fraction: w_t = dw * sum_k 2^k * bit_tk, branchable bits."""
    hvf = case.hcng.hvf
    dw = hvf.cap / (2 ** hvf.bea_depth)
    bea = BeaBits(dw, hvf.bea_depth)
    dv = builder.dv
    nbits = hvf.bea_depth if dw > 0.0 else 0
    for t in range(1, case.T + 1):
        idxs = [dv.add("wB", "k%d" % k, t, binary=True)
                for k in range(nbits)]
        bea.bits[t] = idxs
        expr = dv.expr("w", None, t)
        for k, j in enumerate(idxs):
            expr.add_term(j, -dw * (2 ** k))
        builder.add_eq("hvf_bits[t%d]" % t, expr)
    return bea


def link_product(builder, box, bea, t, x_expr, name):
    """Exact product x * w_t via the bit grid.

    Per bit an auxiliary y_k = x * bit_k with the four switching rows; the
    returned expression sum_k dw 2^k y_k equals x * w_t at every feasible
    point, so callers can treat it as the product itself.
    """
    dv = builder.dv
    lo, hi = box.of(x_expr)
    z = LinearExpr()
    for k, b in enumerate(bea.bits[t]):
        y = dv.add("zw", "%s.k%d" % (name, k), None, min(lo, 0.0), max(hi, 0.0))
        ye = LinearExpr.term(y)
        be = LinearExpr.term(b)
        builder.add_ineq("%s.k%d.ub0" % (name, k), ye - hi * be)
        builder.add_ineq("%s.k%d.lb0" % (name, k), lo * be - ye)
        builder.add_ineq("%s.k%d.ub1" % (name, k), ye - x_expr + lo * (1.0 - be))
        builder.add_ineq("%s.k%d.lb1" % (name, k), x_expr - hi * (1.0 - be) - ye)
        z.add_term(y, bea.delta_w * (2 ** k))
    return z


def mccormick(builder, box, kind, comp, t, iu, iv):
    """Envelope variable for the product x_iu * x_iv over the variable box."""
    dv = builder.dv
    ul, uh = box.of(LinearExpr.term(iu))
    vl, vh = box.of(LinearExpr.term(iv))
    corners = [ul * vl, ul * vh, uh * vl, uh * vh]
    y = dv.add(kind, comp, t, min(corners), max(corners))
    ye = LinearExpr.term(y)
    ue, ve = LinearExpr.term(iu), LinearExpr.term(iv)
    name = dv.name(y)
    builder.add_ineq(name + ".mc1", ul * ve + vl * ue - ul * vl - ye)
    builder.add_ineq(name + ".mc2", uh * ve + vh * ue - uh * vh - ye)
    builder.add_ineq(name + ".mc3", ye - ul * ve - vh * ue + ul * vh)
    builder.add_ineq(name + ".mc4", ye - uh * ve - vl * ue + uh * vl)
    return y


# ---------------------------------------------------------------------------
# reference points for the recovery-side linearizations


@dataclass
class Refs:
    f: dict = field(default_factory=dict)      # (pipe, t) -> scheduled flow
    pi: dict = field(default_factory=dict)     # (node, t) -> pressure
    w: dict = field(default_factory=dict)      # t -> fraction
    a_mn: dict = None                          # (pipe, t) -> flow response
    a_pi: dict = None                          # (node, t) -> pressure response


def refs_from_point(case, dv, x, with_alpha=False):
    refs = Refs()
    for t in range(1, case.T + 1):
        refs.w[t] = float(x[dv.find("w", None, t)])
        for p in case.hcng.pipelines:
            refs.f[(p.id, t)] = float(x[dv.find("F", p.id, t)])
        for n in case.hcng.nodes:
            refs.pi[(n.id, t)] = float(x[dv.find("pi", n.id, t)])
    if with_alpha:
        refs.a_mn, refs.a_pi = {}, {}
        for t in range(1, case.T + 1):
            for p in case.hcng.pipelines:
                refs.a_mn[(p.id, t)] = float(x[dv.find("aMn", p.id, t)])
            for n in case.hcng.nodes:
                refs.a_pi[(n.id, t)] = float(x[dv.find("aPi", n.id, t)])
    return refs


def sign_bigM(builder, case):
    """Direction binaries for reversible pipes: d = 1 means scheduled flow
    runs from the pipe's from-node."""
    dv = builder.dv
    dirs = {}
    for p in case.hcng.pipelines:
        if not p.bidirectional:
            continue
        for t in range(1, case.T + 1):
            d = dv.add("dir", p.id, t, binary=True)
            dirs[(p.id, t)] = d
            fe = dv.expr("F", p.id, t)
            de = LinearExpr.term(d)
            builder.add_ineq("flow_dir[%s,t%d].lo" % (p.id, t),
                             -p.flow_max * (1.0 - de) - fe)
            builder.add_ineq("flow_dir[%s,t%d].hi" % (p.id, t),
                             fe - p.flow_max * de)
    return dirs


# ---------------------------------------------------------------------------
# fraction-coupled equalities


def convexify_hvf(builder, case, bea):
    """Exact convex forms of the mixing recursion and heat couplings."""
    dv = builder.dv
    box = _Intervals(dv)
    gc = case.hcng.gas_constants
    dh = gc.hhv_hy - gc.hhv_gas
    from .dispatch import initial_linepack
    lp0 = sum(initial_linepack(case).values())

    for t in range(1, case.T + 1):
        supply = LinearExpr()
        for s in case.hcng.sources:
            supply.add_term(dv.find("fS", s.id, t), 1.0)
        dch = LinearExpr()
        for s in case.stations.storages:
            dch.add_term(dv.find("fDch", s.id, t), 1.0)
        zs = link_product(builder, box, bea, t, supply, "mixS[t%d]" % t)
        zd = link_product(builder, box, bea, t, dch, "mixD[t%d]" % t)
        if t > 1:
            stored = LinearExpr()
            for p in case.hcng.pipelines:
                stored.add_term(dv.find("LP", p.id, t - 1), 1.0)
            zlp = link_product(builder, box, bea, t, stored, "mixLP[t%d]" % t)
            zprev = link_product(builder, box, bea, t - 1, stored,
                                 "mixLPprev[t%d]" % t)
            expr = zs + zd + zlp - dch - zprev
        else:
            expr = zs + zd + lp0 * dv.expr("w", None, t) - dch \
                - case.hcng.hvf.initial * lp0
        if not expr.is_zero(1e-14):
            builder.add_eq("hvf_mix[t%d]" % t, expr)

        for h in case.hcng.heat_loads:
            fl = dv.expr("fL", h.id, t)
            zfl = link_product(builder, box, bea, t, fl, "heatw[%s,t%d]" % (h.id, t))
            builder.add_eq("heat_load[%s,t%d]" % (h.id, t),
                           gc.hhv_gas * fl + dh * zfl - h.series[t - 1])
        for g in case.grid.gfus:
            fg = dv.expr("fG", g.id, t)
            zfg = link_product(builder, box, bea, t, fg, "fuelw[%s,t%d]" % (g.id, t))
            builder.add_eq("gfu_fuel[%s,t%d]" % (g.id, t),
                           gc.hhv_gas * fg + dh * zfg
                           - g.efficiency * dv.expr("pG", g.id, t))


def convexify_fuel_response(builder, case, bea):
    """Convex form of the fuel-volume response link aFG * hhv = -beta * aG."""
    dv = builder.dv
    box = _Intervals(dv)
    gc = case.hcng.gas_constants
    dh = gc.hhv_hy - gc.hhv_gas
    for t in range(1, case.T + 1):
        for g in case.grid.gfus:
            af = dv.expr("aFG", g.id, t)
            zaf = link_product(builder, box, bea, t, af, "afuelw[%s,t%d]" % (g.id, t))
            builder.add_eq("gfu_fuel_response[%s,t%d]" % (g.id, t),
                           gc.hhv_gas * af + dh * zaf
                           + g.efficiency * dv.expr("aG", g.id, t))


# ---------------------------------------------------------------------------
# pipe equation


def convexify_weymouth(builder, case, bea, refs, dirs):
    """Cone on the pressure-loss side, reference linearization on the
    recovery side, mirrored by direction for reversible pipes.

    The cone uses F * sqrt(M_t/M0) ~ F * (1 - mu w / 2), exact to first
    order.  The recovery row is linear: pressure squares enter through
    their tangents at the reference and the flow term through the
    identity 2 F^r (F k) - (F^r)^2 k <= F^2 k, valid for every fraction.
    Both sides agree with the true equation at the reference, so the
    refinement loop converges to a point where the audit residual is the
    tolerance below.  With refs None only the relaxation side is
    emitted, which is what the warm-start pass wants.

    Recovery rows carry a free tolerance sized against the audit budget
    plus a penalized slack, so a round anchored at not-yet-consistent
    references stays feasible and the refinement loop can walk the
    references in.  Returns the slack sum for the objective.
    """
    dv = builder.dv
    box = _Intervals(dv)
    mu = molar_slope(case)
    ni = {n.id: n for n in case.hcng.nodes}
    tol = case.solver.weymouth_rel_tol
    penalty = LinearExpr()

    for t in range(1, case.T + 1):
        we = dv.expr("w", None, t)
        for p in case.hcng.pipelines:
            fe = dv.expr("F", p.id, t)
            zfw = _shared_fw(builder, box, bea, p, t, fe)
            zf1 = fe - 0.5 * mu * zfw          # F * sqrt(k)
            zf2 = fe - mu * zfw                # F * k
            km = 1.0 - mu * we                 # k = M_t / M0
            sqrt_c0 = math.sqrt(p.c0)
            pm = dv.expr("pi", p.from_node, t)
            pn = dv.expr("pi", p.to_node, t)
            d = dirs.get((p.id, t))

            tail = (1.0 / sqrt_c0) * zf1
            if d is None:
                builder.soc_over_exprs("weymouth_cone[%s,t%d]" % (p.id, t),
                                       pm, [tail, pn])
            else:
                de = LinearExpr.term(d)
                tlo, thi = box.of(tail)
                tmax = max(abs(tlo), abs(thi))
                mfwd = math.hypot(tmax, ni[p.to_node].pressure_max) \
                    - ni[p.from_node].pressure_min
                builder.soc_over_exprs("weymouth_cone[%s,t%d]" % (p.id, t),
                                       pm + max(mfwd, 0.0) * (1.0 - de), [tail, pn])
                mrev = math.hypot(tmax, ni[p.from_node].pressure_max) \
                    - ni[p.to_node].pressure_min
                builder.soc_over_exprs("weymouth_cone[%s,t%d].rev" % (p.id, t),
                                       pn + max(mrev, 0.0) * de, [tail, pm])

            if refs is None:
                continue
            fr = refs.f[(p.id, t)]
            km_ref = 1.0 - mu * refs.w.get(t, 0.0)
            gap = 0.5 * tol * max(1.0, fr * fr * km_ref) / p.c0
            sv = dv.add("sWey", p.id, t, 0.0, INF)
            penalty.add_term(sv, 1.0)
            give = gap + LinearExpr.term(sv)
            pmr = refs.pi[(p.from_node, t)]
            pnr = refs.pi[(p.to_node, t)]
            drop = (1.0 / p.c0) * (2.0 * fr * zf2 - fr * fr * km)
            tan_m = 2.0 * pmr * pm - pmr * pmr
            tan_n = 2.0 * pnr * pn - pnr * pnr
            row = tan_m - tan_n - drop - give
            if d is None:
                builder.add_ineq("weymouth_floor[%s,t%d]" % (p.id, t), row)
            else:
                lo, _hi = box.of(-1.0 * row)
                builder.add_ineq("weymouth_floor[%s,t%d]" % (p.id, t),
                                 row - max(-lo, 0.0) * (1.0 - LinearExpr.term(d)))
                row2 = tan_n - tan_m - drop - give
                lo2, _hi2 = box.of(-1.0 * row2)
                builder.add_ineq("weymouth_floor[%s,t%d].rev" % (p.id, t),
                                 row2 - max(-lo2, 0.0) * LinearExpr.term(d))
    return penalty


def _shared_fw(builder, box, bea, pipe, t, fe):
    """One product link F * w per pipe and period, shared by every consumer."""
    store = getattr(builder, "_fw_links", None)
    if store is None:
        store = {}
        builder._fw_links = store
    key = (pipe.id, t)
    if key not in store:
        store[key] = link_product(builder, box, bea, t, fe,
                                  "fw[%s,t%d]" % (pipe.id, t))
    return store[key]


def convexify_alpha_weymouth(builder, case, refs):
    """Reference linearization of the second-order response consistency
    aMn^2 = sign(F) C (aPi_m^2 - aPi_n^2), coefficient frozen at the
    reference fraction.  Skipped silently when a row degenerates to 0 = 0."""
    dv = builder.dv
    mu = molar_slope(case)
    for t in range(1, case.T + 1):
        cref_scale = 1.0 / max(1.0 - mu * refs.w[t], 1e-9)
        for p in case.hcng.pipelines:
            cr = p.c0 * cref_scale
            sgn = 1.0 if refs.f[(p.id, t)] >= 0.0 else -1.0
            ar = refs.a_mn[(p.id, t)]
            amr = refs.a_pi[(p.from_node, t)]
            anr = refs.a_pi[(p.to_node, t)]
            expr = 2.0 * ar * dv.expr("aMn", p.id, t) - ar * ar \
                - sgn * cr * (2.0 * amr * dv.expr("aPi", p.from_node, t) - amr * amr
                              - 2.0 * anr * dv.expr("aPi", p.to_node, t) + anr * anr)
            if expr.is_zero(1e-14):
                continue
            builder.add_eq("alpha_weymouth[%s,t%d]" % (p.id, t), expr)


def convexify_alpha_flow(builder, case, bea, dirs):
    """First-order response consistency through McCormick envelopes:
    (aMn F) k = sign(F) C0 (aPi_m pi_m - aPi_n pi_n) with every product
    replaced by its envelope variable and the fraction handled exactly."""
    dv = builder.dv
    box = _Intervals(dv)
    mu = molar_slope(case)
    zapi = {}

    def api(node, t):
        key = (node, t)
        if key not in zapi:
            zapi[key] = mccormick(builder, box, "zAPi", node, t,
                                  dv.find("aPi", node, t), dv.find("pi", node, t))
        return zapi[key]

    for t in range(1, case.T + 1):
        for p in case.hcng.pipelines:
            zaf = mccormick(builder, box, "zAF", p.id, t,
                            dv.find("aMn", p.id, t), dv.find("F", p.id, t))
            zaf1 = link_product(builder, box, bea, t, LinearExpr.term(zaf),
                                "aflow_w[%s,t%d]" % (p.id, t))
            zm = api(p.from_node, t)
            zn = api(p.to_node, t)
            lhs = LinearExpr.term(zaf) - mu * zaf1
            diff = LinearExpr.term(zm) - LinearExpr.term(zn)
            d = dirs.get((p.id, t))
            if d is None:
                builder.add_eq("alpha_flow_pressure[%s,t%d]" % (p.id, t),
                               lhs - p.c0 * diff)
                continue
            de = LinearExpr.term(d)
            fwd = lhs - p.c0 * diff
            rev = lhs + p.c0 * diff
            lof, hif = box.of(fwd)
            mf = max(abs(lof), abs(hif))
            builder.add_ineq("alpha_flow_pressure[%s,t%d].fwd+" % (p.id, t),
                             fwd - mf * (1.0 - de))
            builder.add_ineq("alpha_flow_pressure[%s,t%d].fwd-" % (p.id, t),
                             -1.0 * fwd - mf * (1.0 - de))
            lor, hir = box.of(rev)
            mr = max(abs(lor), abs(hir))
            builder.add_ineq("alpha_flow_pressure[%s,t%d].rev+" % (p.id, t),
                             rev - mr * de)
            builder.add_ineq("alpha_flow_pressure[%s,t%d].rev-" % (p.id, t),
                             -1.0 * rev - mr * de)
