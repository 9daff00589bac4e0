"""Network case: domain records, file loading with validation, derived data.

A case file is one JSON document with the sections grid / hcng / stations /
horizon / uncertainty / solver (see docs/case-format.md).  Loading validates
every cross-reference and bound, precomputes the baseline pipeline flow
coefficient for each pipe, and exposes the generation shift factor matrix
and the error-moment model for the ambiguity set.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguitySet


class CaseError(ValueError):
    """Raised for malformed or inconsistent case files, naming the culprit."""


# ---------------------------------------------------------------------------
# component records

@dataclass
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    capacity: float


@dataclass
class NonGfu:
    id: str
    bus: str
    cost_quad: float
    cost_lin: float
    cost_const: float
    p_min: float
    p_max: float
    reserve_up_cost: float
    reserve_down_cost: float


@dataclass
class Gfu:
    id: str
    bus: str
    node: str
    efficiency: float        # heat units per MWh of electric output
    p_min: float
    p_max: float
    reserve_up_cost: float
    reserve_down_cost: float


@dataclass
class PvStation:
    id: str
    bus: str
    forecast: list


@dataclass
class PowerLoad:
    id: str
    bus: str
    series: list


@dataclass
class GridSpec:
    buses: list
    lines: list
    non_gfus: list
    gfus: list
    pv_stations: list
    loads: list
    slack: str = None


@dataclass
class HcngNode:
    id: str
    pressure_min: float
    pressure_max: float
    pressure_init: float = None  # start-of-day pressure, sets the initial line pack


@dataclass
class Pipeline:
    id: str
    from_node: str
    to_node: str
    diameter: float
    friction: float
    length: float
    linepack_coeff: float
    flow_max: float
    bidirectional: bool = False
    c0: float = None         # computed at load time


@dataclass
class Compressor:
    id: str
    node_in: str
    node_out: str
    loss: float
    ratio_min: float
    ratio_max: float
    flow_max: float


@dataclass
class GasSource:
    id: str
    node: str
    cost: float
    f_min: float
    f_max: float
    reserve_up_cost: float
    reserve_down_cost: float


@dataclass
class HeatLoad:
    id: str
    node: str
    series: list


@dataclass
class GasConstants:
    molar_hy: float
    molar_gas: float
    hhv_hy: float
    hhv_gas: float
    gas_r: float
    tau_n: float
    p_n: float
    z_factor: float
    tau_gas: float


@dataclass
class HvfSpec:
    cap: float
    initial: float
    bea_depth: int


@dataclass
class HcngSpec:
    nodes: list
    pipelines: list
    compressors: list
    sources: list
    heat_loads: list
    gas_constants: GasConstants
    hvf: HvfSpec


@dataclass
class P2hUnit:
    id: str
    bus: str
    node: str
    efficiency: float        # volume units per MWh of electric input
    p_min: float
    p_max: float
    reserve_up_cost: float
    reserve_down_cost: float


@dataclass
class Storage:
    id: str
    node: str
    eta_ch: float
    eta_dch: float
    e_min: float
    e_max: float
    e_init: float
    charge_max: float
    discharge_max: float


@dataclass
class StationSpec:
    p2h_units: list
    storages: list


@dataclass
class UncertaintySpec:
    gamma1: float
    gamma2: float
    eta: float
    sigma_total: float       # std of the summed per-period PV error, MW
    shares: list             # per-station share of sigma_total
    persistence: float = 1.0  # cross-period error correlation decay
    jitter: float = 0.05     # independent per-station noise floor, MW


@dataclass
class SolverSpec:
    mip_gap: float = 0.005
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    ccp_iters: int = 3
    ccp_tol: float = 1e-3
    weymouth_rel_tol: float = 0.02
    epsilon: float = 0.05
    node_limit: int = 50000


@dataclass
class NetworkCase:
    name: str
    horizon: int
    grid: GridSpec
    hcng: HcngSpec
    stations: StationSpec
    uncertainty: UncertaintySpec
    solver: SolverSpec
    _gsf: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def T(self):
        return self.horizon

    def bus_index(self):
        return {b: i for i, b in enumerate(self.grid.buses)}

    def node_index(self):
        return {n.id: i for i, n in enumerate(self.hcng.nodes)}

    def gsf(self):
        if self._gsf is None:
            self._gsf = compute_gsf(self.grid, self.grid.slack)
        return self._gsf

    def ambiguity_set(self):
        u = self.uncertainty
        n_pv = len(self.grid.pv_stations)
        T = self.horizon
        mu0 = np.zeros(n_pv * T)
        sigma0 = build_error_covariance(u, n_pv, T)
        return AmbiguitySet(mu0, sigma0, u.gamma1, u.gamma2, u.eta, n_pv, T)

    def to_dict(self):
        d = {
            "name": self.name,
            "horizon": self.horizon,
            "grid": {
                "buses": list(self.grid.buses),
                "slack": self.grid.slack,
                "lines": [_record(x, ("id", "from_bus", "to_bus", "reactance", "capacity"))
                          for x in self.grid.lines],
                "nonGfus": [_record(x, ("id", "bus", "cost_quad", "cost_lin", "cost_const",
                                        "p_min", "p_max", "reserve_up_cost", "reserve_down_cost"))
                            for x in self.grid.non_gfus],
                "gfus": [_record(x, ("id", "bus", "node", "efficiency", "p_min", "p_max",
                                     "reserve_up_cost", "reserve_down_cost"))
                         for x in self.grid.gfus],
                "pvStations": [_record(x, ("id", "bus", "forecast")) for x in self.grid.pv_stations],
                "loads": [_record(x, ("id", "bus", "series")) for x in self.grid.loads],
            },
            "hcng": {
                "nodes": [_record(x, ("id", "pressure_min", "pressure_max",
                                      "pressure_init"))
                          for x in self.hcng.nodes],
                "pipelines": [_record(x, ("id", "from_node", "to_node", "diameter", "friction",
                                          "length", "linepack_coeff", "flow_max", "bidirectional"))
                              for x in self.hcng.pipelines],
                "compressors": [_record(x, ("id", "node_in", "node_out", "loss",
                                            "ratio_min", "ratio_max", "flow_max"))
                                for x in self.hcng.compressors],
                "sources": [_record(x, ("id", "node", "cost", "f_min", "f_max",
                                        "reserve_up_cost", "reserve_down_cost"))
                            for x in self.hcng.sources],
                "heatLoads": [_record(x, ("id", "node", "series")) for x in self.hcng.heat_loads],
                "gasConstants": _record(self.hcng.gas_constants,
                                        ("molar_hy", "molar_gas", "hhv_hy", "hhv_gas", "gas_r",
                                         "tau_n", "p_n", "z_factor", "tau_gas")),
                "hvf": _record(self.hcng.hvf, ("cap", "initial", "bea_depth")),
            },
            "stations": {
                "p2hUnits": [_record(x, ("id", "bus", "node", "efficiency", "p_min", "p_max",
                                         "reserve_up_cost", "reserve_down_cost"))
                             for x in self.stations.p2h_units],
                "storages": [_record(x, ("id", "node", "eta_ch", "eta_dch", "e_min", "e_max",
                                         "e_init", "charge_max", "discharge_max"))
                             for x in self.stations.storages],
            },
            "uncertainty": _record(self.uncertainty,
                                   ("gamma1", "gamma2", "eta", "sigma_total", "shares",
                                    "persistence", "jitter")),
            "solver": _record(self.solver,
                              ("mip_gap", "tol_feas", "tol_gap", "ccp_iters", "ccp_tol",
                               "weymouth_rel_tol", "epsilon", "node_limit")),
        }
        return d


_SNAKE = {}


def _camel(s):
    if s not in _SNAKE:
        parts = s.split("_")
        _SNAKE[s] = parts[0] + "".join(p.title() for p in parts[1:])
    return _SNAKE[s]


def _record(obj, fields_):
    return {_camel(f): getattr(obj, f) for f in fields_}


def build_error_covariance(u, n_pv, T):
    """Error covariance from the compact spec: a persistent shared component
    per station (share of sigma_total, correlation persistence**|t-t'|
    across periods) plus independent per-station jitter."""
    shares = np.asarray(u.shares, dtype=float)
    if shares.shape != (n_pv,):
        raise CaseError("uncertainty.shares must list one share per PV station "
                        "(%d given, %d stations)" % (len(shares), n_pv))
    if shares.sum() <= 0:
        raise CaseError("uncertainty.shares must sum to a positive value")
    shares = shares / shares.sum()
    amp = u.sigma_total * shares
    rho = min(max(u.persistence, 0.0), 1.0)
    P = np.array([[rho ** abs(t - s) for s in range(T)] for t in range(T)])
    sigma = np.kron(P, np.outer(amp, amp)) + (u.jitter ** 2) * np.eye(n_pv * T)
    return sigma


# ---------------------------------------------------------------------------
# derived matrices

def compute_gsf(grid, slack=None):
    """Generation shift factors: line-flow sensitivity to bus injections
    under the DC model, with the slack bus column fixed at zero."""
    buses = list(grid.buses)
    nb = len(buses)
    bi = {b: i for i, b in enumerate(buses)}
    slack = slack or buses[0]
    if slack not in bi:
        raise CaseError("slack bus %r is not in the bus list" % slack)
    nl = len(grid.lines)
    B = np.zeros((nb, nb))
    inc = np.zeros((nl, nb))
    bsus = np.zeros(nl)
    for k, ln in enumerate(grid.lines):
        if ln.reactance <= 0:
            raise CaseError("line %s has nonpositive reactance" % ln.id)
        i, j = bi[ln.from_bus], bi[ln.to_bus]
        y = 1.0 / ln.reactance
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
        inc[k, i] = 1.0
        inc[k, j] = -1.0
        bsus[k] = y
    keep = [i for i in range(nb) if i != bi[slack]]
    Bred = B[np.ix_(keep, keep)]
    try:
        Binv = np.linalg.inv(Bred)
    except np.linalg.LinAlgError as exc:
        raise CaseError("grid is disconnected or degenerate: %s" % exc) from None
    if np.linalg.cond(Bred) > 1e12:
        raise CaseError("grid susceptance matrix is numerically singular "
                        "(disconnected network?)")
    gsf = np.zeros((nl, nb))
    gsf[:, keep] = (bsus[:, None] * inc[:, keep]) @ Binv
    return gsf


def baseline_flow_coeff(pipe, gc):
    """Pipeline flow coefficient evaluated at the reference molar mass
    (pure natural gas), so a zero hydrogen fraction reproduces it exactly."""
    for fname, v in (("diameter", pipe.diameter), ("friction", pipe.friction),
                     ("length", pipe.length)):
        if v <= 0:
            raise CaseError("pipeline %s: %s must be positive" % (pipe.id, fname))
    for fname, v in (("gasR", gc.gas_r), ("tauN", gc.tau_n), ("pN", gc.p_n),
                     ("zFactor", gc.z_factor), ("tauGas", gc.tau_gas),
                     ("molarGas", gc.molar_gas)):
        if v <= 0:
            raise CaseError("gasConstants.%s must be positive" % fname)
    return ((math.pi / 4.0) ** 2 * pipe.diameter ** 5 * gc.gas_r * gc.tau_n ** 2
            / (pipe.friction * pipe.length * gc.p_n ** 2 * gc.molar_gas
               * gc.z_factor * gc.tau_gas))


# ---------------------------------------------------------------------------
# loading and validation

def _need(d, key, where, typ=None):
    if key not in d:
        raise CaseError("%s: missing field %r" % (where, key))
    v = d[key]
    if typ is not None and not isinstance(v, typ):
        raise CaseError("%s: field %r has wrong type %s" % (where, key, type(v).__name__))
    return v


def _series(d, key, where, T):
    v = _need(d, key, where, list)
    if len(v) != T:
        raise CaseError("%s: series %r has length %d, expected horizon %d"
                        % (where, key, len(v), T))
    return [float(x) for x in v]


def load_case(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CaseError("cannot read case file %s: %s" % (path, exc)) from None
    except json.JSONDecodeError as exc:
        raise CaseError("case file %s is not valid JSON: %s" % (path, exc)) from None
    return case_from_dict(raw)


def save_case(case, path):
    with open(path, "w") as fh:
        json.dump(case.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def case_from_dict(raw):
    T = int(_need(raw, "horizon", "case"))
    if T < 1:
        raise CaseError("horizon must be at least 1")
    g = _need(raw, "grid", "case", dict)
    buses = _need(g, "buses", "grid", list)
    if len(set(buses)) != len(buses):
        raise CaseError("grid.buses contains duplicates")
    busset = set(buses)

    def check_bus(b, who):
        if b not in busset:
            raise CaseError("%s references unknown bus %r" % (who, b))

    lines = []
    for d in g.get("lines", []):
        ln = Line(_need(d, "id", "line"),
                  d.get("from", d.get("fromBus")), d.get("to", d.get("toBus")),
                  float(_need(d, "reactance", "line")),
                  float(_need(d, "capacity", "line")))
        if ln.from_bus is None or ln.to_bus is None:
            raise CaseError("line %s: missing fromBus/toBus" % ln.id)
        check_bus(ln.from_bus, "line %s" % ln.id)
        check_bus(ln.to_bus, "line %s" % ln.id)
        if ln.capacity <= 0:
            raise CaseError("line %s: capacity must be positive" % ln.id)
        if ln.reactance <= 0:
            raise CaseError("line %s: reactance must be positive" % ln.id)
        lines.append(ln)

    non_gfus = []
    for d in g.get("nonGfus", []):
        u = NonGfu(_need(d, "id", "nonGfu"), _need(d, "bus", "nonGfu"),
                   float(d.get("costQuad", 0.0)), float(d.get("costLin", 0.0)),
                   float(d.get("costConst", 0.0)),
                   float(_need(d, "pMin", "nonGfu")), float(_need(d, "pMax", "nonGfu")),
                   float(d.get("reserveUpCost", 0.0)), float(d.get("reserveDownCost", 0.0)))
        check_bus(u.bus, "nonGfu %s" % u.id)
        if u.p_max < u.p_min:
            raise CaseError("nonGfu %s: pMax < pMin" % u.id)
        if u.cost_quad < 0:
            raise CaseError("nonGfu %s: costQuad must be nonnegative" % u.id)
        non_gfus.append(u)

    hc = _need(raw, "hcng", "case", dict)
    nodes = []
    for d in hc.get("nodes", []):
        n = HcngNode(_need(d, "id", "node"), float(_need(d, "pressureMin", "node")),
                     float(_need(d, "pressureMax", "node")))
        if not 0 < n.pressure_min <= n.pressure_max:
            raise CaseError("node %s: need 0 < pressureMin <= pressureMax" % n.id)
        n.pressure_init = float(d.get("pressureInit",
                                      0.5 * (n.pressure_min + n.pressure_max)))
        if not n.pressure_min <= n.pressure_init <= n.pressure_max:
            raise CaseError("node %s: pressureInit outside the pressure bounds" % n.id)
        nodes.append(n)
    if len({n.id for n in nodes}) != len(nodes):
        raise CaseError("hcng.nodes contains duplicate ids")
    nodeset = {n.id for n in nodes}

    def check_node(m, who):
        if m not in nodeset:
            raise CaseError("%s references unknown node %r" % (who, m))

    gfus = []
    for d in g.get("gfus", []):
        u = Gfu(_need(d, "id", "gfu"), _need(d, "bus", "gfu"), _need(d, "node", "gfu"),
                float(_need(d, "efficiency", "gfu")),
                float(_need(d, "pMin", "gfu")), float(_need(d, "pMax", "gfu")),
                float(d.get("reserveUpCost", 0.0)), float(d.get("reserveDownCost", 0.0)))
        check_bus(u.bus, "gfu %s" % u.id)
        check_node(u.node, "gfu %s" % u.id)
        if u.p_max < u.p_min:
            raise CaseError("gfu %s: pMax < pMin" % u.id)
        if u.efficiency <= 0:
            raise CaseError("gfu %s: efficiency must be positive" % u.id)
        gfus.append(u)

    pvs = []
    for d in g.get("pvStations", []):
        p = PvStation(_need(d, "id", "pvStation"), _need(d, "bus", "pvStation"),
                      _series(d, "forecast", "pvStation %s" % d.get("id"), T))
        check_bus(p.bus, "pvStation %s" % p.id)
        pvs.append(p)

    loads = []
    for d in g.get("loads", []):
        l = PowerLoad(_need(d, "id", "load"), _need(d, "bus", "load"),
                      _series(d, "series", "load %s" % d.get("id"), T))
        check_bus(l.bus, "load %s" % l.id)
        loads.append(l)

    slack = g.get("slack") or (buses[0] if buses else None)
    if slack is not None and slack not in busset:
        raise CaseError("grid.slack %r is not a bus" % slack)
    grid = GridSpec(buses, lines, non_gfus, gfus, pvs, loads, slack)

    gcd = _need(hc, "gasConstants", "hcng", dict)
    gc = GasConstants(float(_need(gcd, "molarHy", "gasConstants")),
                      float(_need(gcd, "molarGas", "gasConstants")),
                      float(_need(gcd, "hhvHy", "gasConstants")),
                      float(_need(gcd, "hhvGas", "gasConstants")),
                      float(_need(gcd, "gasR", "gasConstants")),
                      float(_need(gcd, "tauN", "gasConstants")),
                      float(_need(gcd, "pN", "gasConstants")),
                      float(_need(gcd, "zFactor", "gasConstants")),
                      float(_need(gcd, "tauGas", "gasConstants")))
    for fname in ("molar_hy", "hhv_hy", "hhv_gas"):
        if getattr(gc, fname) <= 0:
            raise CaseError("gasConstants.%s must be positive" % _camel(fname))

    hvfd = _need(hc, "hvf", "hcng", dict)
    hvf = HvfSpec(float(_need(hvfd, "cap", "hvf")), float(hvfd.get("initial", 0.0)),
                  int(hvfd.get("beaDepth", 3)))
    if not 0.0 <= hvf.initial <= hvf.cap <= 1.0:
        raise CaseError("hvf: need 0 <= initial <= cap <= 1")
    if hvf.bea_depth < 1:
        raise CaseError("hvf.beaDepth must be at least 1")

    pipes = []
    for d in hc.get("pipelines", []):
        p = Pipeline(_need(d, "id", "pipeline"),
                     d.get("from", d.get("fromNode")), d.get("to", d.get("toNode")),
                     float(_need(d, "diameter", "pipeline")),
                     float(_need(d, "friction", "pipeline")),
                     float(_need(d, "length", "pipeline")),
                     float(d.get("linepackCoeff", 0.0)),
                     float(_need(d, "flowMax", "pipeline")),
                     bool(d.get("bidirectional", False)))
        if p.from_node is None or p.to_node is None:
            raise CaseError("pipeline %s: missing fromNode/toNode" % p.id)
        check_node(p.from_node, "pipeline %s" % p.id)
        check_node(p.to_node, "pipeline %s" % p.id)
        if p.flow_max <= 0:
            raise CaseError("pipeline %s: flowMax must be positive" % p.id)
        if p.linepack_coeff < 0:
            raise CaseError("pipeline %s: linepackCoeff must be nonnegative" % p.id)
        p.c0 = baseline_flow_coeff(p, gc)
        pipes.append(p)

    comps = []
    for d in hc.get("compressors", []):
        c = Compressor(_need(d, "id", "compressor"), _need(d, "nodeIn", "compressor"),
                       _need(d, "nodeOut", "compressor"), float(d.get("loss", 0.0)),
                       float(_need(d, "ratioMin", "compressor")),
                       float(_need(d, "ratioMax", "compressor")),
                       float(_need(d, "flowMax", "compressor")))
        check_node(c.node_in, "compressor %s" % c.id)
        check_node(c.node_out, "compressor %s" % c.id)
        if c.ratio_min > c.ratio_max:
            raise CaseError("compressor %s: ratioMin > ratioMax" % c.id)
        if not 0.0 <= c.loss < 1.0:
            raise CaseError("compressor %s: loss must lie in [0, 1)" % c.id)
        comps.append(c)

    sources = []
    for d in hc.get("sources", []):
        s = GasSource(_need(d, "id", "source"), _need(d, "node", "source"),
                      float(_need(d, "cost", "source")),
                      float(_need(d, "fMin", "source")), float(_need(d, "fMax", "source")),
                      float(d.get("reserveUpCost", 0.0)), float(d.get("reserveDownCost", 0.0)))
        check_node(s.node, "source %s" % s.id)
        if s.f_max < s.f_min:
            raise CaseError("source %s: fMax < fMin" % s.id)
        sources.append(s)

    heats = []
    for d in hc.get("heatLoads", []):
        h = HeatLoad(_need(d, "id", "heatLoad"), _need(d, "node", "heatLoad"),
                     _series(d, "series", "heatLoad %s" % d.get("id"), T))
        check_node(h.node, "heatLoad %s" % h.id)
        heats.append(h)

    hcng = HcngSpec(nodes, pipes, comps, sources, heats, gc, hvf)

    st = raw.get("stations", {})
    p2hs = []
    for d in st.get("p2hUnits", []):
        u = P2hUnit(_need(d, "id", "p2hUnit"), _need(d, "bus", "p2hUnit"),
                    _need(d, "node", "p2hUnit"), float(_need(d, "efficiency", "p2hUnit")),
                    float(_need(d, "pMin", "p2hUnit")), float(_need(d, "pMax", "p2hUnit")),
                    float(d.get("reserveUpCost", 0.0)), float(d.get("reserveDownCost", 0.0)))
        check_bus(u.bus, "p2hUnit %s" % u.id)
        check_node(u.node, "p2hUnit %s" % u.id)
        if u.p_max < u.p_min:
            raise CaseError("p2hUnit %s: pMax < pMin" % u.id)
        if u.efficiency <= 0:
            raise CaseError("p2hUnit %s: efficiency must be positive" % u.id)
        p2hs.append(u)

    stors = []
    for d in st.get("storages", []):
        s = Storage(_need(d, "id", "storage"), _need(d, "node", "storage"),
                    float(_need(d, "etaCh", "storage")), float(_need(d, "etaDch", "storage")),
                    float(_need(d, "eMin", "storage")), float(_need(d, "eMax", "storage")),
                    float(_need(d, "eInit", "storage")),
                    float(_need(d, "chargeMax", "storage")),
                    float(_need(d, "dischargeMax", "storage")))
        check_node(s.node, "storage %s" % s.id)
        if not 0 < s.eta_ch <= 1 or not 0 < s.eta_dch <= 1:
            raise CaseError("storage %s: efficiencies must lie in (0, 1]" % s.id)
        if not s.e_min <= s.e_init <= s.e_max:
            raise CaseError("storage %s: need eMin <= eInit <= eMax" % s.id)
        stors.append(s)

    stations = StationSpec(p2hs, stors)

    ud = _need(raw, "uncertainty", "case", dict)
    unc = UncertaintySpec(float(_need(ud, "gamma1", "uncertainty")),
                          float(_need(ud, "gamma2", "uncertainty")),
                          float(_need(ud, "eta", "uncertainty")),
                          float(_need(ud, "sigmaTotal", "uncertainty")),
                          [float(x) for x in _need(ud, "shares", "uncertainty", list)],
                          float(ud.get("persistence", 1.0)),
                          float(ud.get("jitter", 0.05)))
    if len(unc.shares) != len(pvs):
        raise CaseError("uncertainty.shares must list one share per PV station "
                        "(%d given, %d stations)" % (len(unc.shares), len(pvs)))

    sd = raw.get("solver", {})
    sv = SolverSpec(float(sd.get("mipGap", 0.005)), float(sd.get("tolFeas", 1e-8)),
                    float(sd.get("tolGap", 1e-8)), int(sd.get("ccpIters", 3)),
                    float(sd.get("ccpTol", 1e-3)), float(sd.get("weymouthRelTol", 0.02)),
                    float(sd.get("epsilon", 0.05)), int(sd.get("nodeLimit", 50000)))
    if not 0.0 < sv.epsilon < 1.0:
        raise CaseError("solver.epsilon must lie in (0, 1)")

    case = NetworkCase(str(raw.get("name", "case")), T, grid, hcng, stations, unc, sv)
    case.ambiguity_set()   # surfaces bad moment parameters at load time
    return case
