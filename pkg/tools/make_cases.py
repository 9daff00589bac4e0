"""Author the bundled cases.

Builds micro3x4.json and desk5x7.json into src/ehcng/data/.  Pipe
diameters are back-solved from target flow coefficients so the pressure
drops land in a sensible range for the intended flows.  Run with --probe
to solve the freshly written cases and print tuning diagnostics.
"""
import argparse
import json
import math
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "src", "ehcng", "data")
sys.path.insert(0, os.path.join(HERE, "..", "src"))

GAS = {"molarHy": 2.0, "molarGas": 16.0, "hhvHy": 3.3, "hhvGas": 10.0,
       "gasR": 8.314, "tauN": 288.0, "pN": 101.325, "zFactor": 0.9,
       "tauGas": 288.0}


def unit_coeff():
    """Flow coefficient of a pipe with D = L = friction = 1."""
    g = GAS
    return ((math.pi / 4.0) ** 2 * g["gasR"] * g["tauN"] ** 2
            / (g["pN"] ** 2 * g["molarGas"] * g["zFactor"] * g["tauGas"]))


def pipe(pid, frm, to, c0_target, pack, fmax, bidirectional=False,
         friction=0.01, length=30.0):
    base = unit_coeff() / (friction * length)
    d = (c0_target / base) ** 0.2
    out = {"id": pid, "from": frm, "to": to, "diameter": round(d, 6),
           "friction": friction, "length": length,
           "linepackCoeff": pack, "flowMax": fmax}
    if bidirectional:
        out["bidirectional"] = True
    return out


def scale(series, k):
    return [round(v * k, 3) for v in series]


# ---------------------------------------------------------------------------


def build_micro():
    T = 6
    return {
        "name": "micro3x4",
        "horizon": T,
        "grid": {
            "buses": ["B1", "B2", "B3"],
            "slack": "B1",
            "lines": [
                {"id": "LA", "from": "B1", "to": "B2", "reactance": 0.1, "capacity": 500.0},
                {"id": "LB", "from": "B2", "to": "B3", "reactance": 0.1, "capacity": 500.0},
                {"id": "LC", "from": "B3", "to": "B1", "reactance": 0.1, "capacity": 500.0},
            ],
            "nonGfus": [
                {"id": "U1", "bus": "B1", "costQuad": 0.04, "costLin": 25.0,
                 "costConst": 100.0, "pMin": 0.0, "pMax": 300.0,
                 "reserveUpCost": 6.0, "reserveDownCost": 6.0},
            ],
            "gfus": [
                {"id": "G1", "bus": "B2", "node": "N3", "efficiency": 2.5,
                 "pMin": 0.0, "pMax": 150.0,
                 "reserveUpCost": 12.0, "reserveDownCost": 12.0},
            ],
            "pvStations": [
                {"id": "PV1", "bus": "B3", "forecast": [0.0, 20.0, 60.0, 80.0, 50.0, 10.0]},
            ],
            "loads": [
                {"id": "D1", "bus": "B2", "series": [150.0, 170.0, 200.0, 220.0, 200.0, 170.0]},
                {"id": "D2", "bus": "B3", "series": [60.0, 60.0, 70.0, 80.0, 70.0, 60.0]},
            ],
        },
        "hcng": {
            "nodes": [
                {"id": "N1", "pressureMin": 40.0, "pressureMax": 60.0, "pressureInit": 50.0},
                {"id": "N2", "pressureMin": 35.0, "pressureMax": 60.0, "pressureInit": 48.0},
                {"id": "N3", "pressureMin": 30.0, "pressureMax": 55.0, "pressureInit": 45.0},
                {"id": "N4", "pressureMin": 30.0, "pressureMax": 55.0, "pressureInit": 42.0},
            ],
            "pipelines": [
                pipe("PA", "N1", "N2", 6.0, 0.0, 80.0),
                pipe("PB", "N2", "N3", 4.0, 0.0, 60.0),
                pipe("PC", "N2", "N4", 3.0, 0.0, 40.0),
            ],
            "compressors": [],
            "sources": [
                {"id": "SA", "node": "N1", "cost": 20.0, "fMin": 0.0, "fMax": 120.0,
                 "reserveUpCost": 5.0, "reserveDownCost": 5.0},
            ],
            "heatLoads": [
                {"id": "HH", "node": "N4", "series": [45.0, 45.0, 55.0, 60.0, 55.0, 45.0]},
            ],
            "gasConstants": dict(GAS),
            "hvf": {"cap": 0.0, "initial": 0.0, "beaDepth": 1},
        },
        "stations": {"p2hUnits": [], "storages": []},
        "uncertainty": {"gamma1": 0.1, "gamma2": 1.1, "eta": 1.0,
                        "sigmaTotal": 1.0, "shares": [1.0],
                        "persistence": 1.0, "jitter": 0.01},
        "solver": {"mipGap": 0.005, "epsilon": 0.05, "ccpIters": 3,
                   "nodeLimit": 20000},
    }


# ---------------------------------------------------------------------------


LOAD_TOT = [520, 500, 485, 475, 470, 490, 540, 600, 660, 700, 720, 730,
            735, 730, 720, 712, 705, 722, 760, 780, 758, 700, 620, 560]
PV_TOT = [0, 0, 0, 0, 0, 6, 30, 80, 150, 210, 262, 292,
          300, 290, 254, 200, 140, 80, 30, 6, 0, 0, 0, 0]
HEAT_SHAPE = [1.08, 1.05, 1.02, 1.00, 1.00, 1.04, 1.10, 1.12, 1.06, 1.00,
              0.95, 0.90, 0.88, 0.88, 0.90, 0.95, 1.00, 1.06, 1.12, 1.14,
              1.12, 1.10, 1.10, 1.09]


def build_desk():
    T = 24
    assert len(LOAD_TOT) == len(PV_TOT) == len(HEAT_SHAPE) == T
    return {
        "name": "desk5x7",
        "horizon": T,
        "grid": {
            "buses": ["B1", "B2", "B3", "B4", "B5"],
            "slack": "B1",
            "lines": [
                {"id": "L1", "from": "B1", "to": "B2", "reactance": 0.10, "capacity": 400.0},
                {"id": "L2", "from": "B2", "to": "B3", "reactance": 0.10, "capacity": 260.0},
                {"id": "L3", "from": "B3", "to": "B4", "reactance": 0.03, "capacity": 350.0},
                {"id": "L4", "from": "B4", "to": "B5", "reactance": 0.10, "capacity": 300.0},
                {"id": "L5", "from": "B5", "to": "B1", "reactance": 0.12, "capacity": 300.0},
                {"id": "L6", "from": "B2", "to": "B5", "reactance": 0.12, "capacity": 300.0},
                {"id": "L7", "from": "B2", "to": "B4", "reactance": 0.14, "capacity": 300.0},
            ],
            "nonGfus": [
                {"id": "U1", "bus": "B1", "costQuad": 0.045, "costLin": 28.0,
                 "costConst": 600.0, "pMin": -800.0, "pMax": 1100.0,
                 "reserveUpCost": 5.0, "reserveDownCost": 5.0},
            ],
            "gfus": [
                {"id": "G1", "bus": "B2", "node": "N5", "efficiency": 2.5,
                 "pMin": 0.0, "pMax": 200.0,
                 "reserveUpCost": 7.0, "reserveDownCost": 7.0},
                {"id": "G2", "bus": "B3", "node": "N3", "efficiency": 2.5,
                 "pMin": 0.0, "pMax": 220.0,
                 "reserveUpCost": 7.0, "reserveDownCost": 7.0},
            ],
            "pvStations": [
                {"id": "PV1", "bus": "B3", "forecast": scale(PV_TOT, 0.5)},
                {"id": "PV2", "bus": "B4", "forecast": scale(PV_TOT, 0.5)},
            ],
            "loads": [
                {"id": "D1", "bus": "B1", "series": scale(LOAD_TOT, 0.45)},
                {"id": "D2", "bus": "B2", "series": scale(LOAD_TOT, 0.55)},
            ],
        },
        "hcng": {
            "nodes": [
                {"id": "N1", "pressureMin": 35.0, "pressureMax": 45.0, "pressureInit": 40.0},
                {"id": "N2", "pressureMin": 45.0, "pressureMax": 75.0, "pressureInit": 60.0},
                {"id": "N3", "pressureMin": 40.0, "pressureMax": 70.0, "pressureInit": 56.0},
                {"id": "N4", "pressureMin": 40.0, "pressureMax": 70.0, "pressureInit": 56.0},
                {"id": "N5", "pressureMin": 35.0, "pressureMax": 65.0, "pressureInit": 50.0},
                {"id": "N6", "pressureMin": 35.0, "pressureMax": 65.0, "pressureInit": 50.0},
                {"id": "N7", "pressureMin": 30.0, "pressureMax": 60.0, "pressureInit": 45.0},
            ],
            "pipelines": [
                pipe("PL1", "N2", "N3", 11.0, 0.8, 160.0),
                pipe("PL2", "N2", "N4", 8.0, 0.8, 120.0),
                pipe("PL3", "N3", "N5", 5.0, 0.7, 90.0),
                pipe("PL4", "N4", "N6", 5.0, 0.7, 90.0),
                pipe("PL5", "N6", "N7", 2.5, 0.6, 40.0),
                pipe("PL6", "N3", "N4", 2.5, 0.6, 40.0, bidirectional=True),
                pipe("PL7", "N5", "N6", 3.0, 0.6, 60.0),
            ],
            "compressors": [
                {"id": "C1", "nodeIn": "N1", "nodeOut": "N2", "loss": 0.01,
                 "ratioMin": 1.0, "ratioMax": 2.0, "flowMax": 220.0},
                {"id": "C2", "nodeIn": "N5", "nodeOut": "N7", "loss": 0.015,
                 "ratioMin": 1.0, "ratioMax": 1.6, "flowMax": 50.0},
            ],
            "sources": [
                {"id": "SA", "node": "N1", "cost": 150.0, "fMin": 0.0, "fMax": 200.0,
                 "reserveUpCost": 9.0, "reserveDownCost": 9.0},
                {"id": "SB", "node": "N4", "cost": 190.0, "fMin": 0.0, "fMax": 45.0,
                 "reserveUpCost": 9.0, "reserveDownCost": 9.0},
            ],
            "heatLoads": [
                {"id": "HL1", "node": "N3", "series": scale(HEAT_SHAPE, 180.0)},
                {"id": "HL2", "node": "N6", "series": scale(HEAT_SHAPE, 170.0)},
                {"id": "HL3", "node": "N7", "series": scale(HEAT_SHAPE, 130.0)},
            ],
            "gasConstants": dict(GAS),
            "hvf": {"cap": 0.2, "initial": 0.0, "beaDepth": 3},
        },
        "stations": {
            "p2hUnits": [
                {"id": "H1", "bus": "B4", "node": "N6", "efficiency": 0.21,
                 "pMin": 0.0, "pMax": 120.0,
                 "reserveUpCost": 12.0, "reserveDownCost": 12.0},
            ],
            "storages": [
                {"id": "S1", "node": "N6", "etaCh": 0.9, "etaDch": 0.95,
                 "eMin": 20.0, "eMax": 260.0, "eInit": 120.0,
                 "chargeMax": 22.0, "dischargeMax": 40.0},
            ],
        },
        "uncertainty": {"gamma1": 0.1, "gamma2": 1.1, "eta": 1.0,
                        "sigmaTotal": 4.0, "shares": [0.5, 0.5],
                        "persistence": 1.0, "jitter": 0.05},
        "solver": {"mipGap": 0.005, "epsilon": 0.05, "ccpIters": 3,
                   "nodeLimit": 50000},
    }


# ---------------------------------------------------------------------------


def write_cases():
    os.makedirs(DATA, exist_ok=True)
    for name, build in (("micro3x4", build_micro), ("desk5x7", build_desk)):
        path = os.path.join(DATA, name + ".json")
        with open(path, "w") as fh:
            json.dump(build(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print("wrote", path)


def probe(which, stage):
    import time
    import numpy as np
    from ehcng.case import load_case
    from ehcng.pipeline import build_program, solve_case
    from ehcng.solver import solve_misocp
    from ehcng.solver.ipm import SolverSettings

    case = load_case(os.path.join(DATA, which + ".json"))
    print("case", case.name, "T", case.T)
    gsf = case.gsf()
    print("gsf rows (lines x buses):")
    for k, ln in enumerate(case.grid.lines):
        print("  %-3s" % ln.id, " ".join("%7.3f" % v for v in gsf[k]))

    if stage in ("init", "all"):
        t0 = time.monotonic()
        prog, ctx = build_program(case, policy="P1",
                                  fixed_w=case.hcng.hvf.initial)
        print("init program: %d cols %d eq %d ineq %d soc %d bins" % (
            prog.n, len(prog.eq_names), len(prog.ineq_names),
            len(prog.soc), len(prog.binaries)))
        sol = solve_misocp(prog, SolverSettings(mip_gap=case.solver.mip_gap))
        print("init solve: %s obj=%s nodes=%d iters=%d %.1fs" % (
            sol.status, sol.obj, sol.nodes, sol.iterations,
            time.monotonic() - t0))
        if sol.ok:
            for k, ln in enumerate(case.grid.lines):
                flows = []
                for t in range(1, case.T + 1):
                    inj = {}
                    from ehcng.dispatch import bus_injections, line_flows
                    fl = line_flows(case, ctx.dv, t)
                    flows.append(fl[k].value(sol.x))
                print("  %-3s flow [%7.1f, %7.1f] cap %.0f" % (
                    ln.id, min(flows), max(flows), ln.capacity))

    if stage in ("main", "all"):
        t0 = time.monotonic()
        sol = solve_case(case)
        print("full solve: %s obj=%s rounds=%d %.1fs" % (
            sol.status, sol.objective, sol.ccp_rounds, time.monotonic() - t0))
        print("timings", {k: round(v, 1) for k, v in sol.timings.items()})


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--probe", choices=["micro3x4", "desk5x7"])
    ap.add_argument("--stage", default="init", choices=["init", "main", "all"])
    args = ap.parse_args()
    write_cases()
    if args.probe:
        probe(args.probe, args.stage)


if __name__ == "__main__":
    main()
