"""Affine recourse layer.

Every adjustable quantity responds linearly to the period's aggregate
forecast error z_t = e'xi_t: generators and the electrolyser shift their
setpoints, the gas side re-balances through source, storage-discharge,
compressor, pressure and pipe-end response factors, and storage energy
integrates the response over time.  This module adds the equalities that
make those responses mutually consistent for every realization, turns each
operating limit into a condition  a(x) * z_t <= b(x)  handed to the robust
decomposition, and evaluates realized operating points for audits.

The response-consistency equalities are exact when the aggregate error is
persistent across periods (the error-moment model is built that way); the
per-period conditions themselves hold for any error realization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispatch import initial_linepack, line_flows
from .model import (ConstraintSet, LinearExpr, RawAdjFlowPressure,
                    RawAdjWeymouth, RawProduct)

_GSF_TOL = 1e-12


@dataclass
class AffineCondition:
    """One robust operating condition  a(x) * z_t <= b(x)."""
    name: str
    tag: str
    a: LinearExpr
    b: LinearExpr
    t: int          # 1-based dispatch period


def pv_shares(case):
    s = np.asarray(case.uncertainty.shares, dtype=float)
    return s / s.sum()


def build_affine_links(case, dv):
    """Equalities tying the response factors together.

    Power balance must absorb the whole error, conversion and storage
    responses follow their own physics, and the gas-side responses satisfy
    the same node balance and pipe relations as the scheduled flows.  The
    pipe-equation consistency relations are registered raw; their convex
    treatment lives elsewhere.
    """
    cs = ConstraintSet()
    T = case.T
    gc = case.hcng.gas_constants

    for t in range(1, T + 1):
        bal = LinearExpr.constant(-1.0)
        for u in case.grid.non_gfus:
            bal.add_term(dv.find("aNG", u.id, t), 1.0)
        for g in case.grid.gfus:
            bal.add_term(dv.find("aG", g.id, t), 1.0)
        for u in case.stations.p2h_units:
            bal.add_term(dv.find("aP2Hp", u.id, t), 1.0)
        cs.add_eq("alpha_power_balance[t%d]" % t, "alpha_power_balance", bal)

    for u in case.stations.p2h_units:
        for t in range(1, T + 1):
            expr = dv.expr("aP2Hf", u.id, t) - u.efficiency * dv.expr("aP2Hp", u.id, t)
            cs.add_eq("alpha_p2h_conversion[%s,t%d]" % (u.id, t),
                      "alpha_p2h_conversion", expr)

    for s in case.stations.storages:
        fills = [u for u in case.stations.p2h_units if u.node == s.node]
        for t in range(1, T + 1):
            expr = dv.expr("aE", s.id, t) + (1.0 / s.eta_dch) * dv.expr("aDch", s.id, t)
            for u in fills:
                expr.add_term(dv.find("aP2Hf", u.id, t), -s.eta_ch)
            if t > 1:
                expr = expr - dv.expr("aE", s.id, t - 1)
            cs.add_eq("alpha_energy[%s,t%d]" % (s.id, t), "alpha_energy", expr)

    for g in case.grid.gfus:
        for t in range(1, T + 1):
            cs.add_raw(RawProduct("gfu_fuel_response_raw[%s,t%d]" % (g.id, t),
                                  "gfu_fuel_response_raw",
                                  dv.expr("aFG", g.id, t), dv.expr("hhv", None, t),
                                  -g.efficiency * dv.expr("aG", g.id, t)))

    srcs_at, gfus_at, stors_at = {}, {}, {}
    for s in case.hcng.sources:
        srcs_at.setdefault(s.node, []).append(s)
    for g in case.grid.gfus:
        gfus_at.setdefault(g.node, []).append(g)
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

    for t in range(1, T + 1):
        for n in case.hcng.nodes:
            bal = LinearExpr()
            for s in srcs_at.get(n.id, ()):
                bal.add_term(dv.find("aS", s.id, t), 1.0)
            for s in stors_at.get(n.id, ()):
                bal.add_term(dv.find("aDch", s.id, t), 1.0)
            for g in gfus_at.get(n.id, ()):
                bal.add_term(dv.find("aFG", g.id, t), -1.0)
            for c in comps_in.get(n.id, ()):
                bal.add_term(dv.find("aC", c.id, t), -(1.0 + c.loss))
            for c in comps_out.get(n.id, ()):
                bal.add_term(dv.find("aC", c.id, t), 1.0)
            for p in pipes_from.get(n.id, ()):
                bal.add_term(dv.find("aIn", p.id, t), -1.0)
            for p in pipes_to.get(n.id, ()):
                bal.add_term(dv.find("aOut", p.id, t), 1.0)
            cs.add_eq("alpha_node_balance[%s,t%d]" % (n.id, t),
                      "alpha_node_balance", bal)

        for p in case.hcng.pipelines:
            k2 = 0.5 * p.linepack_coeff
            step = dv.expr("aIn", p.id, t) - dv.expr("aOut", p.id, t) \
                - k2 * (dv.expr("aPi", p.from_node, t) + dv.expr("aPi", p.to_node, t))
            if t > 1:
                # the previous pack level responds to the same persistent error
                step = step + k2 * (dv.expr("aPi", p.from_node, t - 1)
                                    + dv.expr("aPi", p.to_node, t - 1))
            cs.add_eq("alpha_pack_step[%s,t%d]" % (p.id, t), "alpha_pack_step", step)
            avg = dv.expr("aMn", p.id, t) \
                - 0.5 * (dv.expr("aIn", p.id, t) + dv.expr("aOut", p.id, t))
            cs.add_eq("alpha_flow_avg[%s,t%d]" % (p.id, t), "alpha_flow_avg", avg)
            cs.add_raw(RawAdjWeymouth("alpha_weymouth_raw[%s,t%d]" % (p.id, t),
                                      "alpha_weymouth_raw",
                                      dv.find("aMn", p.id, t),
                                      dv.find("aPi", p.from_node, t),
                                      dv.find("aPi", p.to_node, t),
                                      dv.find("F", p.id, t),
                                      dv.find("molar", None, t), p.c0, gc.molar_gas))
            cs.add_raw(RawAdjFlowPressure("alpha_flow_pressure_raw[%s,t%d]" % (p.id, t),
                                          "alpha_flow_pressure_raw",
                                          dv.find("aMn", p.id, t), dv.find("F", p.id, t),
                                          dv.find("aPi", p.from_node, t),
                                          dv.find("pi", p.from_node, t),
                                          dv.find("aPi", p.to_node, t),
                                          dv.find("pi", p.to_node, t),
                                          dv.find("molar", None, t), p.c0, gc.molar_gas))
    return cs


def _box_pair(out, tag, comp, t, a, base, lo, hi):
    """Two-sided box on a quantity base + a * z: emit the .hi and .lo sides."""
    out.append(AffineCondition("%s[%s,t%d].hi" % (tag, comp, t), tag,
                               a, hi - base, t))
    out.append(AffineCondition("%s[%s,t%d].lo" % (tag, comp, t), tag,
                               -1.0 * a, base - lo, t))


def generate_tilde_conditions(case, dv):
    """Every operating limit as a robust condition a(x) * z_t <= b(x).

    Box limits come in mirrored pairs; reserve adequacy bounds the response
    magnitude per direction by the procured reserve.  The terminal storage
    and daily line-pack conditions are stamped with the final period.
    """
    conds = []
    T = case.T
    gsf = case.gsf()
    bi = case.bus_index()
    shares = pv_shares(case)
    nl = len(case.grid.lines)
    pv_coef = np.zeros(nl)
    for k in range(nl):
        pv_coef[k] = sum(gsf[k, bi[p.bus]] * shares[i]
                         for i, p in enumerate(case.grid.pv_stations))

    for t in range(1, T + 1):
        flows = line_flows(case, dv, t)
        for k, ln in enumerate(case.grid.lines):
            a = LinearExpr.constant(pv_coef[k])
            for u in case.grid.non_gfus:
                c = gsf[k, bi[u.bus]]
                if abs(c) > _GSF_TOL:
                    a.add_term(dv.find("aNG", u.id, t), -c)
            for g in case.grid.gfus:
                c = gsf[k, bi[g.bus]]
                if abs(c) > _GSF_TOL:
                    a.add_term(dv.find("aG", g.id, t), -c)
            for u in case.stations.p2h_units:
                c = gsf[k, bi[u.bus]]
                if abs(c) > _GSF_TOL:
                    a.add_term(dv.find("aP2Hp", u.id, t), -c)
            _box_pair(conds, "line_limit", ln.id, t, a, flows[k],
                      -ln.capacity, ln.capacity)

        for u in case.grid.non_gfus:
            _box_pair(conds, "gen_box", u.id, t, -1.0 * dv.expr("aNG", u.id, t),
                      dv.expr("pNG", u.id, t), u.p_min, u.p_max)
            conds.append(AffineCondition("reserve_ng[%s,t%d].up" % (u.id, t), "reserve_ng",
                                         -1.0 * dv.expr("aNG", u.id, t),
                                         dv.expr("rNGu", u.id, t), t))
            conds.append(AffineCondition("reserve_ng[%s,t%d].dn" % (u.id, t), "reserve_ng",
                                         dv.expr("aNG", u.id, t),
                                         dv.expr("rNGd", u.id, t), t))
        for g in case.grid.gfus:
            _box_pair(conds, "gfu_box", g.id, t, -1.0 * dv.expr("aG", g.id, t),
                      dv.expr("pG", g.id, t), g.p_min, g.p_max)
            conds.append(AffineCondition("reserve_gfu[%s,t%d].up" % (g.id, t), "reserve_gfu",
                                         -1.0 * dv.expr("aG", g.id, t),
                                         dv.expr("rGu", g.id, t), t))
            conds.append(AffineCondition("reserve_gfu[%s,t%d].dn" % (g.id, t), "reserve_gfu",
                                         dv.expr("aG", g.id, t),
                                         dv.expr("rGd", g.id, t), t))
        for u in case.stations.p2h_units:
            _box_pair(conds, "p2h_box", u.id, t, dv.expr("aP2Hp", u.id, t),
                      dv.expr("pP2H", u.id, t), u.p_min, u.p_max)
            conds.append(AffineCondition("reserve_p2h[%s,t%d].up" % (u.id, t), "reserve_p2h",
                                         dv.expr("aP2Hp", u.id, t),
                                         dv.expr("rP2Hu", u.id, t), t))
            conds.append(AffineCondition("reserve_p2h[%s,t%d].dn" % (u.id, t), "reserve_p2h",
                                         -1.0 * dv.expr("aP2Hp", u.id, t),
                                         dv.expr("rP2Hd", u.id, t), t))

        for s in case.stations.storages:
            fills = [u for u in case.stations.p2h_units if u.node == s.node]
            ach = LinearExpr()
            charge = LinearExpr()
            for u in fills:
                ach.add_term(dv.find("aP2Hf", u.id, t), 1.0)
                charge.add_term(dv.find("fP2H", u.id, t), 1.0)
            _box_pair(conds, "charge_box", s.id, t, ach, charge, 0.0, s.charge_max)
            _box_pair(conds, "discharge_box", s.id, t, dv.expr("aDch", s.id, t),
                      dv.expr("fDch", s.id, t), 0.0, s.discharge_max)
            _box_pair(conds, "energy_box", s.id, t, dv.expr("aE", s.id, t),
                      dv.expr("E", s.id, t), s.e_min, s.e_max)

        for p in case.hcng.pipelines:
            flo = -p.flow_max if p.bidirectional else 0.0
            _box_pair(conds, "pipe_flow_box", p.id, t, dv.expr("aMn", p.id, t),
                      dv.expr("F", p.id, t), flo, p.flow_max)
        for c in case.hcng.compressors:
            ain = dv.expr("aPi", c.node_in, t)
            aout = dv.expr("aPi", c.node_out, t)
            pin = dv.expr("pi", c.node_in, t)
            pout = dv.expr("pi", c.node_out, t)
            conds.append(AffineCondition("compressor_ratio[%s,t%d].hi" % (c.id, t),
                                         "compressor_ratio",
                                         aout - c.ratio_max * ain,
                                         c.ratio_max * pin - pout, t))
            conds.append(AffineCondition("compressor_ratio[%s,t%d].lo" % (c.id, t),
                                         "compressor_ratio",
                                         c.ratio_min * ain - aout,
                                         pout - c.ratio_min * pin, t))
            _box_pair(conds, "compressor_flow_box", c.id, t, dv.expr("aC", c.id, t),
                      dv.expr("fC", c.id, t), 0.0, c.flow_max)
        for n in case.hcng.nodes:
            _box_pair(conds, "pressure_box", n.id, t, dv.expr("aPi", n.id, t),
                      dv.expr("pi", n.id, t), n.pressure_min, n.pressure_max)
        for s in case.hcng.sources:
            _box_pair(conds, "source_box", s.id, t, dv.expr("aS", s.id, t),
                      dv.expr("fS", s.id, t), s.f_min, s.f_max)
            conds.append(AffineCondition("reserve_source[%s,t%d].up" % (s.id, t),
                                         "reserve_source", dv.expr("aS", s.id, t),
                                         dv.expr("rSu", s.id, t), t))
            conds.append(AffineCondition("reserve_source[%s,t%d].dn" % (s.id, t),
                                         "reserve_source", -1.0 * dv.expr("aS", s.id, t),
                                         dv.expr("rSd", s.id, t), t))

    for s in case.stations.storages:
        conds.append(AffineCondition("energy_final[%s]" % s.id, "energy_final",
                                     -1.0 * dv.expr("aE", s.id, T),
                                     dv.expr("E", s.id, T) - s.e_init, T))
    if case.hcng.pipelines:
        lp0 = initial_linepack(case)
        a = LinearExpr()
        b = LinearExpr.constant(-sum(lp0.values()))
        for p in case.hcng.pipelines:
            k2 = 0.5 * p.linepack_coeff
            a.add_term(dv.find("aPi", p.from_node, T), -k2)
            a.add_term(dv.find("aPi", p.to_node, T), -k2)
            b.add_term(dv.find("LP", p.id, T), 1.0)
        conds.append(AffineCondition("linepack_day", "linepack_day", a, b, T))
    return conds


# ---------------------------------------------------------------------------
# realization audits


@dataclass
class RealizedPoint:
    """One dispatch solution pushed through one error realization."""
    z: np.ndarray                # aggregate error per period, (T,)
    power_residual: np.ndarray   # realized system power balance, (T,)
    node_residual: np.ndarray    # realized gas node balance, (nodes, T)
    line_flow: np.ndarray        # realized line flows, (lines, T)
    storage_residual: np.ndarray  # realized energy recursion, (storages, T)
    pack_residual: np.ndarray    # realized pack step, (pipes, T)

    @property
    def max_balance(self):
        vals = [np.abs(self.power_residual).max() if self.power_residual.size else 0.0,
                np.abs(self.node_residual).max() if self.node_residual.size else 0.0]
        return max(vals)


def apply_realization(case, dv, x, xi):
    """Evaluate the affine policy at solution x under error sample xi.

    xi is the stacked per-station error, period-major, matching the
    ambiguity set layout.  All adjustable quantities move by their response
    factor times the period's aggregate error; PV stations contribute their
    own realized deviations, so the power balance audit is exact for any
    sample while the storage and pack recursions are exact only for
    persistent ones.
    """
    x = np.asarray(x, dtype=float)
    T = case.T
    n_pv = len(case.grid.pv_stations)
    xi = np.asarray(xi, dtype=float).reshape(T, n_pv)
    z = xi.sum(axis=1)

    def at(kind, comp, t):
        return x[dv.find(kind, comp, t)]

    power = np.zeros(T)
    for t in range(1, T + 1):
        zt = z[t - 1]
        acc = 0.0
        for u in case.grid.non_gfus:
            acc += at("pNG", u.id, t) - at("aNG", u.id, t) * zt
        for g in case.grid.gfus:
            acc += at("pG", g.id, t) - at("aG", g.id, t) * zt
        for i, p in enumerate(case.grid.pv_stations):
            acc += p.forecast[t - 1] + xi[t - 1, i]
        for l in case.grid.loads:
            acc -= l.series[t - 1]
        for u in case.stations.p2h_units:
            acc -= at("pP2H", u.id, t) + at("aP2Hp", u.id, t) * zt
        power[t - 1] = acc

    gsf = case.gsf()
    bi = case.bus_index()
    nl = len(case.grid.lines)
    flows = np.zeros((nl, T))
    for t in range(1, T + 1):
        zt = z[t - 1]
        inj = dict.fromkeys(case.grid.buses, 0.0)
        for u in case.grid.non_gfus:
            inj[u.bus] += at("pNG", u.id, t) - at("aNG", u.id, t) * zt
        for g in case.grid.gfus:
            inj[g.bus] += at("pG", g.id, t) - at("aG", g.id, t) * zt
        for i, p in enumerate(case.grid.pv_stations):
            inj[p.bus] += p.forecast[t - 1] + xi[t - 1, i]
        for l in case.grid.loads:
            inj[l.bus] -= l.series[t - 1]
        for u in case.stations.p2h_units:
            inj[u.bus] -= at("pP2H", u.id, t) + at("aP2Hp", u.id, t) * zt
        vec = np.zeros(len(case.grid.buses))
        for b, v in inj.items():
            vec[bi[b]] = v
        flows[:, t - 1] = gsf @ vec

    lp0 = initial_linepack(case)
    nodes = case.hcng.nodes
    node_res = np.zeros((len(nodes), T))
    ni = {n.id: i for i, n in enumerate(nodes)}
    for t in range(1, T + 1):
        zt = z[t - 1]
        acc = np.zeros(len(nodes))
        for s in case.hcng.sources:
            acc[ni[s.node]] += at("fS", s.id, t) + at("aS", s.id, t) * zt
        for s in case.stations.storages:
            acc[ni[s.node]] += at("fDch", s.id, t) + at("aDch", s.id, t) * zt
        for g in case.grid.gfus:
            acc[ni[g.node]] -= at("fG", g.id, t) + at("aFG", g.id, t) * zt
        for h in case.hcng.heat_loads:
            acc[ni[h.node]] -= x[dv.find("fL", h.id, t)]
        for c in case.hcng.compressors:
            fc = at("fC", c.id, t) + at("aC", c.id, t) * zt
            acc[ni[c.node_in]] -= (1.0 + c.loss) * fc
            acc[ni[c.node_out]] += fc
        for p in case.hcng.pipelines:
            acc[ni[p.from_node]] -= at("fIn", p.id, t) + at("aIn", p.id, t) * zt
            acc[ni[p.to_node]] += at("fOut", p.id, t) + at("aOut", p.id, t) * zt
        node_res[:, t - 1] = acc

    stors = case.stations.storages
    stor_res = np.zeros((len(stors), T))
    for si, s in enumerate(stors):
        fills = [u for u in case.stations.p2h_units if u.node == s.node]
        for t in range(1, T + 1):
            zt = z[t - 1]
            e_now = at("E", s.id, t) + at("aE", s.id, t) * zt
            if t > 1:
                e_prev = at("E", s.id, t - 1) + at("aE", s.id, t - 1) * z[t - 2]
            else:
                e_prev = s.e_init
            ch = sum(at("fP2H", u.id, t) + at("aP2Hf", u.id, t) * zt for u in fills)
            dch = at("fDch", s.id, t) + at("aDch", s.id, t) * zt
            stor_res[si, t - 1] = e_now - e_prev - s.eta_ch * ch + dch / s.eta_dch

    pipes = case.hcng.pipelines
    pack_res = np.zeros((len(pipes), T))
    for pi_, p in enumerate(pipes):
        k2 = 0.5 * p.linepack_coeff
        for t in range(1, T + 1):
            zt = z[t - 1]
            lp_now = at("LP", p.id, t) + k2 * (at("aPi", p.from_node, t)
                                               + at("aPi", p.to_node, t)) * zt
            if t > 1:
                zp = z[t - 2]
                lp_prev = at("LP", p.id, t - 1) + k2 * (at("aPi", p.from_node, t - 1)
                                                        + at("aPi", p.to_node, t - 1)) * zp
            else:
                lp_prev = lp0[p.id]
            fin = at("fIn", p.id, t) + at("aIn", p.id, t) * zt
            fout = at("fOut", p.id, t) + at("aOut", p.id, t) * zt
            pack_res[pi_, t - 1] = fin - fout - lp_now + lp_prev

    return RealizedPoint(z, power, node_res, flows, stor_res, pack_res)
