"""Deterministic dispatch skeleton: decision variables, base constraints,
objective.

Everything registered here is first stage: scheduled productions, gas flows,
pressures, line pack, the hydrogen volume fraction, reserve procurements and
the affine response factors.  Uncertainty enters elsewhere: the affine layer
adds the response-consistency equalities and turns the operating limits into
robust conditions over these same variables, and the convexification layer
replaces the raw equations registered here with tractable envelopes.

Sign conventions.  Pipe flow is positive from the pipe's from-node; the gas
node balance uses the pipe-end flows (inflow at the sending node, outflow at
the receiving node) so that network-wide mass lands in the line pack.  A
compressor withdraws (1 + loss) * flow at its inlet node and delivers flow at
its outlet.  Power-to-hydrogen output charges the storage co-located at its
node and only storage discharge reaches the gas network.
"""
from __future__ import annotations

from .model import (ConstraintSet, DecisionVector, LinearExpr, QuadExpr,
                    RawHvfMix, RawProduct, RawWeymouth)

# Flat boxes for the affine response factors: wide enough that optima are
# interior, finite so product envelopes and split big-Ms stay bounded.
ALPHA_BOUND = 8.0
ALPHA_PRESSURE_BOUND = 10.0
ALPHA_PACK_BOUND = 60.0
ALPHA_ENERGY_BOUND = 50.0

_GSF_TOL = 1e-12


def mix_molar(gc, w):
    return gc.molar_gas + w * (gc.molar_hy - gc.molar_gas)


def mix_hhv(gc, w):
    return gc.hhv_gas + w * (gc.hhv_hy - gc.hhv_gas)


def hvf_ranges(case):
    """(molar_lo, molar_hi, hhv_lo, hhv_hi) over the admissible fraction."""
    gc = case.hcng.gas_constants
    cap = case.hcng.hvf.cap
    m0, m1 = mix_molar(gc, 0.0), mix_molar(gc, cap)
    h0, h1 = mix_hhv(gc, 0.0), mix_hhv(gc, cap)
    return min(m0, m1), max(m0, m1), min(h0, h1), max(h0, h1)


def initial_linepack(case):
    """Start-of-day pack per pipe from the case's initial pressures."""
    ni = {n.id: n for n in case.hcng.nodes}
    out = {}
    for p in case.hcng.pipelines:
        pm = ni[p.from_node].pressure_init
        pn = ni[p.to_node].pressure_init
        out[p.id] = p.linepack_coeff * 0.5 * (pm + pn)
    return out


def pack_bounds(case, pipe):
    """Line pack box implied by the end-node pressure boxes."""
    ni = {n.id: n for n in case.hcng.nodes}
    m, n = ni[pipe.from_node], ni[pipe.to_node]
    k = pipe.linepack_coeff
    return (k * 0.5 * (m.pressure_min + n.pressure_min),
            k * 0.5 * (m.pressure_max + n.pressure_max))


def register_variables(case):
    dv = DecisionVector()
    T = case.T
    gc = case.hcng.gas_constants
    mol_lo, mol_hi, hhv_lo, hhv_hi = hvf_ranges(case)

    for u in case.grid.non_gfus:
        span = u.p_max - u.p_min
        for t in range(1, T + 1):
            dv.add("pNG", u.id, t, u.p_min, u.p_max)
            dv.add("rNGu", u.id, t, 0.0, span)
            dv.add("rNGd", u.id, t, 0.0, span)
    for u in case.grid.gfus:
        span = u.p_max - u.p_min
        for t in range(1, T + 1):
            dv.add("pG", u.id, t, u.p_min, u.p_max)
            dv.add("rGu", u.id, t, 0.0, span)
            dv.add("rGd", u.id, t, 0.0, span)
    for u in case.stations.p2h_units:
        span = u.p_max - u.p_min
        b = u.efficiency
        for t in range(1, T + 1):
            dv.add("pP2H", u.id, t, u.p_min, u.p_max)
            dv.add("rP2Hu", u.id, t, 0.0, span)
            dv.add("rP2Hd", u.id, t, 0.0, span)
            dv.add("fP2H", u.id, t, b * u.p_min, b * u.p_max)

    for s in case.hcng.sources:
        span = s.f_max - s.f_min
        for t in range(1, T + 1):
            dv.add("fS", s.id, t, s.f_min, s.f_max)
            dv.add("rSu", s.id, t, 0.0, span)
            dv.add("rSd", s.id, t, 0.0, span)
    for c in case.hcng.compressors:
        for t in range(1, T + 1):
            dv.add("fC", c.id, t, 0.0, c.flow_max)
    for n in case.hcng.nodes:
        for t in range(1, T + 1):
            dv.add("pi", n.id, t, n.pressure_min, n.pressure_max)
    for p in case.hcng.pipelines:
        flo = -p.flow_max if p.bidirectional else 0.0
        lp_lo, lp_hi = pack_bounds(case, p)
        half = 0.5 * (lp_hi - lp_lo)
        for t in range(1, T + 1):
            dv.add("F", p.id, t, flo, p.flow_max)
            dv.add("fIn", p.id, t, flo - half, p.flow_max + half)
            dv.add("fOut", p.id, t, flo - half, p.flow_max + half)
            dv.add("LP", p.id, t, lp_lo, lp_hi)
    for g in case.grid.gfus:
        lo = min(g.efficiency * g.p_min / hhv_lo, g.efficiency * g.p_min / hhv_hi)
        hi = max(g.efficiency * g.p_max / hhv_lo, g.efficiency * g.p_max / hhv_hi)
        for t in range(1, T + 1):
            dv.add("fG", g.id, t, lo, hi)
    for h in case.hcng.heat_loads:
        for t in range(1, T + 1):
            heat = h.series[t - 1]
            lo = min(heat / hhv_lo, heat / hhv_hi)
            hi = max(heat / hhv_lo, heat / hhv_hi)
            dv.add("fL", h.id, t, lo, hi)

    for s in case.stations.storages:
        for t in range(1, T + 1):
            dv.add("fDch", s.id, t, 0.0, s.discharge_max)
            dv.add("E", s.id, t, s.e_min, s.e_max)

    cap = case.hcng.hvf.cap
    for t in range(1, T + 1):
        dv.add("w", None, t, 0.0, cap)
        dv.add("molar", None, t, mol_lo, mol_hi)
        dv.add("hhv", None, t, hhv_lo, hhv_hi)

    A = ALPHA_BOUND
    for u in case.grid.non_gfus:
        for t in range(1, T + 1):
            dv.add("aNG", u.id, t, -A, A)
    for g in case.grid.gfus:
        fa = g.efficiency * A / hhv_lo
        for t in range(1, T + 1):
            dv.add("aG", g.id, t, -A, A)
            dv.add("aFG", g.id, t, -fa, fa)
    for u in case.stations.p2h_units:
        for t in range(1, T + 1):
            dv.add("aP2Hp", u.id, t, -A, A)
            dv.add("aP2Hf", u.id, t, -u.efficiency * A, u.efficiency * A)
    for s in case.stations.storages:
        for t in range(1, T + 1):
            dv.add("aDch", s.id, t, -A, A)
            dv.add("aE", s.id, t, -ALPHA_ENERGY_BOUND, ALPHA_ENERGY_BOUND)
    for s in case.hcng.sources:
        for t in range(1, T + 1):
            dv.add("aS", s.id, t, -A, A)
    for c in case.hcng.compressors:
        for t in range(1, T + 1):
            dv.add("aC", c.id, t, -A, A)
    for n in case.hcng.nodes:
        for t in range(1, T + 1):
            dv.add("aPi", n.id, t, -ALPHA_PRESSURE_BOUND, ALPHA_PRESSURE_BOUND)
    for p in case.hcng.pipelines:
        for t in range(1, T + 1):
            dv.add("aMn", p.id, t, -A, A)
            dv.add("aIn", p.id, t, -ALPHA_PACK_BOUND, ALPHA_PACK_BOUND)
            dv.add("aOut", p.id, t, -ALPHA_PACK_BOUND, ALPHA_PACK_BOUND)
    return dv


def build_objective(case, dv):
    """Production cost plus procured reserve cost, summed over the horizon."""
    obj = QuadExpr()
    for t in range(1, case.T + 1):
        for u in case.grid.non_gfus:
            j = dv.find("pNG", u.id, t)
            obj.add_quad(j, u.cost_quad)
            obj.add_linear(j, u.cost_lin)
            obj.add_const(u.cost_const)
            obj.add_linear(dv.find("rNGu", u.id, t), u.reserve_up_cost)
            obj.add_linear(dv.find("rNGd", u.id, t), u.reserve_down_cost)
        for u in case.grid.gfus:
            obj.add_linear(dv.find("rGu", u.id, t), u.reserve_up_cost)
            obj.add_linear(dv.find("rGd", u.id, t), u.reserve_down_cost)
        for u in case.stations.p2h_units:
            obj.add_linear(dv.find("rP2Hu", u.id, t), u.reserve_up_cost)
            obj.add_linear(dv.find("rP2Hd", u.id, t), u.reserve_down_cost)
        for s in case.hcng.sources:
            obj.add_linear(dv.find("fS", s.id, t), s.cost)
            obj.add_linear(dv.find("rSu", s.id, t), s.reserve_up_cost)
            obj.add_linear(dv.find("rSd", s.id, t), s.reserve_down_cost)
    return obj


def bus_injections(case, dv, t):
    """Scheduled net injection per bus: dispatch less load plus forecast PV."""
    inj = {b: LinearExpr() for b in case.grid.buses}
    for u in case.grid.non_gfus:
        inj[u.bus].add_term(dv.find("pNG", u.id, t), 1.0)
    for u in case.grid.gfus:
        inj[u.bus].add_term(dv.find("pG", u.id, t), 1.0)
    for u in case.stations.p2h_units:
        inj[u.bus].add_term(dv.find("pP2H", u.id, t), -1.0)
    for p in case.grid.pv_stations:
        inj[p.bus].const += p.forecast[t - 1]
    for l in case.grid.loads:
        inj[l.bus].const -= l.series[t - 1]
    return inj


def line_flows(case, dv, t, inj=None):
    """Scheduled line flows as shift-factor combinations of injections."""
    if inj is None:
        inj = bus_injections(case, dv, t)
    gsf = case.gsf()
    bi = case.bus_index()
    flows = []
    for k in range(len(case.grid.lines)):
        f = LinearExpr()
        for b, e in inj.items():
            c = gsf[k, bi[b]]
            if abs(c) < _GSF_TOL:
                continue
            f.const += c * e.const
            for j, v in e.terms.items():
                f.add_term(j, c * v)
        flows.append(f)
    return flows


def build_power_constraints(case, dv):
    cs = ConstraintSet()
    for t in range(1, case.T + 1):
        inj = bus_injections(case, dv, t)
        total = LinearExpr()
        for e in inj.values():
            total = total + e
        cs.add_eq("power_balance[t%d]" % t, "power_balance", total)
        for ln, f in zip(case.grid.lines, line_flows(case, dv, t, inj)):
            cs.add_range("line_limit[%s,t%d]" % (ln.id, t), "line_limit",
                         f, -ln.capacity, ln.capacity)
    return cs


def build_station_constraints(case, dv):
    cs = ConstraintSet()
    by_node = {}
    for s in case.stations.storages:
        if s.node in by_node:
            raise ValueError("node %s hosts more than one storage" % s.node)
        by_node[s.node] = s
    for u in case.stations.p2h_units:
        if u.node not in by_node:
            raise ValueError("p2h unit %s has no storage at node %s"
                             % (u.id, u.node))

    for u in case.stations.p2h_units:
        for t in range(1, case.T + 1):
            # conversion is volumetric and species-pure, hence linear
            expr = dv.expr("fP2H", u.id, t) - u.efficiency * dv.expr("pP2H", u.id, t)
            cs.add_eq("p2h_conversion[%s,t%d]" % (u.id, t), "p2h_conversion", expr)

    for s in case.stations.storages:
        fills = [u for u in case.stations.p2h_units if u.node == s.node]
        for t in range(1, case.T + 1):
            charge = LinearExpr()
            for u in fills:
                charge.add_term(dv.find("fP2H", u.id, t), 1.0)
            expr = dv.expr("E", s.id, t) - s.eta_ch * charge \
                + (1.0 / s.eta_dch) * dv.expr("fDch", s.id, t)
            if t > 1:
                expr = expr - dv.expr("E", s.id, t - 1)
            else:
                expr = expr - s.e_init
            cs.add_eq("storage_balance[%s,t%d]" % (s.id, t), "storage_balance", expr)
            cs.add_range("storage_charge[%s,t%d]" % (s.id, t), "storage_charge",
                         charge, 0.0, s.charge_max)
        # end the day no emptier than it began
        cs.add_ineq("storage_final[%s]" % s.id, "storage_final",
                    s.e_init - dv.expr("E", s.id, case.T))
    return cs


def build_hcng_constraints(case, dv):
    cs = ConstraintSet()
    gc = case.hcng.gas_constants
    lp0 = initial_linepack(case)
    srcs_at, gfus_at, heats_at, stors_at = {}, {}, {}, {}
    for s in case.hcng.sources:
        srcs_at.setdefault(s.node, []).append(s)
    for g in case.grid.gfus:
        gfus_at.setdefault(g.node, []).append(g)
    for h in case.hcng.heat_loads:
        heats_at.setdefault(h.node, []).append(h)
    for s in case.stations.storages:
        stors_at.setdefault(s.node, []).append(s)
    pipes_from, pipes_to = {}, {}
    for p in case.hcng.pipelines:
        pipes_from.setdefault(p.from_node, []).append(p)
        pipes_to.setdefault(p.to_node, []).append(p)
    comps_in, comps_out = {}, {}
    for c in case.hcng.compressors:
        comps_in.setdefault(c.node_in, []).append(c)
        comps_out.setdefault(c.node_out, []).append(c)

    for t in range(1, case.T + 1):
        for n in case.hcng.nodes:
            bal = LinearExpr()
            for s in srcs_at.get(n.id, ()):
                bal.add_term(dv.find("fS", s.id, t), 1.0)
            for s in stors_at.get(n.id, ()):
                bal.add_term(dv.find("fDch", s.id, t), 1.0)
            for g in gfus_at.get(n.id, ()):
                bal.add_term(dv.find("fG", g.id, t), -1.0)
            for h in heats_at.get(n.id, ()):
                bal.add_term(dv.find("fL", h.id, t), -1.0)
            for c in comps_in.get(n.id, ()):
                bal.add_term(dv.find("fC", c.id, t), -(1.0 + c.loss))
            for c in comps_out.get(n.id, ()):
                bal.add_term(dv.find("fC", c.id, t), 1.0)
            for p in pipes_from.get(n.id, ()):
                bal.add_term(dv.find("fIn", p.id, t), -1.0)
            for p in pipes_to.get(n.id, ()):
                bal.add_term(dv.find("fOut", p.id, t), 1.0)
            cs.add_eq("node_balance[%s,t%d]" % (n.id, t), "node_balance", bal)

        for c in case.hcng.compressors:
            pin = dv.expr("pi", c.node_in, t)
            pout = dv.expr("pi", c.node_out, t)
            cs.add_ineq("compressor_ratio[%s,t%d].hi" % (c.id, t),
                        "compressor_ratio", pout - c.ratio_max * pin)
            cs.add_ineq("compressor_ratio[%s,t%d].lo" % (c.id, t),
                        "compressor_ratio", c.ratio_min * pin - pout)

        for p in case.hcng.pipelines:
            cs.add_raw(RawWeymouth("weymouth_raw[%s,t%d]" % (p.id, t), "weymouth_raw",
                                   dv.find("F", p.id, t),
                                   dv.find("pi", p.from_node, t),
                                   dv.find("pi", p.to_node, t),
                                   dv.find("molar", None, t), p.c0, gc.molar_gas))
            lvl = dv.expr("LP", p.id, t) \
                - 0.5 * p.linepack_coeff * (dv.expr("pi", p.from_node, t)
                                            + dv.expr("pi", p.to_node, t))
            cs.add_eq("linepack_level[%s,t%d]" % (p.id, t), "linepack_level", lvl)
            step = dv.expr("fIn", p.id, t) - dv.expr("fOut", p.id, t) \
                - dv.expr("LP", p.id, t)
            if t > 1:
                step = step + dv.expr("LP", p.id, t - 1)
            else:
                step = step + lp0[p.id]
            cs.add_eq("linepack_step[%s,t%d]" % (p.id, t), "linepack_step", step)
            avg = dv.expr("F", p.id, t) \
                - 0.5 * (dv.expr("fIn", p.id, t) + dv.expr("fOut", p.id, t))
            cs.add_eq("pipe_flow_avg[%s,t%d]" % (p.id, t), "pipe_flow_avg", avg)

    if case.hcng.pipelines:
        day = LinearExpr.constant(sum(lp0.values()))
        for p in case.hcng.pipelines:
            day.add_term(dv.find("LP", p.id, case.T), -1.0)
        cs.add_ineq("linepack_day", "linepack_day", day)
    return cs


def build_hvf_constraints(case, dv):
    """Mixing recursion, mixture properties and the heat-content couplings."""
    cs = ConstraintSet()
    gc = case.hcng.gas_constants
    hvf = case.hcng.hvf
    lp0 = initial_linepack(case)

    for t in range(1, case.T + 1):
        mol = dv.expr("molar", None, t) - (gc.molar_hy - gc.molar_gas) * dv.expr("w", None, t) \
            - gc.molar_gas
        cs.add_eq("molar_mass[t%d]" % t, "molar_mass", mol)
        hv = dv.expr("hhv", None, t) - (gc.hhv_hy - gc.hhv_gas) * dv.expr("w", None, t) \
            - gc.hhv_gas
        cs.add_eq("heat_value[t%d]" % t, "heat_value", hv)

        supply = LinearExpr()
        for s in case.hcng.sources:
            supply.add_term(dv.find("fS", s.id, t), 1.0)
        dch = LinearExpr()
        for s in case.stations.storages:
            dch.add_term(dv.find("fDch", s.id, t), 1.0)
        if t > 1:
            stored = LinearExpr()
            for p in case.hcng.pipelines:
                stored.add_term(dv.find("LP", p.id, t - 1), 1.0)
            wprev, w0 = dv.find("w", None, t - 1), 0.0
        else:
            stored = LinearExpr.constant(sum(lp0.values()))
            wprev, w0 = None, hvf.initial
        cs.add_raw(RawHvfMix("hvf_mix_raw[t%d]" % t, "hvf_mix_raw",
                             dv.find("w", None, t), supply, dch, stored,
                             i_wprev=wprev, w0=w0))

        for h in case.hcng.heat_loads:
            cs.add_raw(RawProduct("heat_load_raw[%s,t%d]" % (h.id, t), "heat_load_raw",
                                  dv.expr("fL", h.id, t), dv.expr("hhv", None, t),
                                  LinearExpr.constant(h.series[t - 1])))
        for g in case.grid.gfus:
            cs.add_raw(RawProduct("gfu_fuel_raw[%s,t%d]" % (g.id, t), "gfu_fuel_raw",
                                  dv.expr("fG", g.id, t), dv.expr("hhv", None, t),
                                  g.efficiency * dv.expr("pG", g.id, t)))
    return cs


def build_dispatch_model(case):
    """Variables, base constraint registry and objective for one case."""
    dv = register_variables(case)
    cset = ConstraintSet()
    cset.merge(build_power_constraints(case, dv))
    cset.merge(build_station_constraints(case, dv))
    cset.merge(build_hcng_constraints(case, dv))
    cset.merge(build_hvf_constraints(case, dv))
    return dv, cset, build_objective(case, dv)
