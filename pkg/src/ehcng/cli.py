"""Command-line front end.

Artifacts are deterministic: every file embeds the configuration hash and
seed, floats are printed with fixed precision, and wall-clock numbers go
to a separate timings.log so reruns with the same configuration produce
byte-identical reports.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .case import load_case
from .model import eval_residuals
from .pipeline import build_program, solve_case, POLICIES
from .drjcc import METHODS
from . import validate as val

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3


def _case_hash(case):
    blob = json.dumps(case.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _config_hash(args, case_hash):
    keys = ("command", "method", "policy", "eps", "seed", "samples",
            "gap", "ccp_iters")
    cfg = {k: getattr(args, k, None) for k in keys}
    cfg["case"] = case_hash
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _out_dir(args):
    out = args.out or os.environ.get("EHCNG_OUT") or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _load(args):
    case = load_case(args.case)
    if args.gap is not None:
        case.solver.mip_gap = args.gap
    if args.ccp_iters is not None:
        case.solver.ccp_iters = args.ccp_iters
    return case


def _header(args, case_hash):
    return ["config: %s" % _config_hash(args, case_hash),
            "case_hash: %s" % case_hash,
            "seed: %d" % args.seed]


def _write(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _log_timing(out, label, seconds):
    with open(os.path.join(out, "timings.log"), "a") as fh:
        fh.write("%s %.3f\n" % (label, seconds))


def _exit_for(status):
    if status in ("optimal",):
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_NO_CONVERGENCE


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args):
    case = _load(args)
    out = _out_dir(args)
    chash = _case_hash(case)
    t0 = time.monotonic()
    sol = solve_case(case, method=args.method, policy=args.policy,
                     eps=args.eps)
    elapsed = time.monotonic() - t0
    _log_timing(out, "solve %s %s" % (args.method, args.policy), elapsed)
    for k, v in sorted(sol.timings.items()):
        _log_timing(out, "  stage %s" % k, v)

    head = _header(args, chash)
    head += ["method: %s" % args.method, "policy: %s" % args.policy,
             "epsilon: %.6g" % (args.eps if args.eps is not None
                                else case.solver.epsilon),
             "status: %s" % sol.status]
    if not sol.ok:
        head.append("stage: %s" % sol.stage)
        if sol.message:
            head.append("message: %s" % sol.message)
        _write(os.path.join(out, "solve_report.txt"), head)
        print("\n".join(head))
        return _exit_for(sol.status)

    head += ["objective: %.10g" % sol.objective,
             "gap: %.3e" % sol.mip.gap,
             "nodes: %d" % sol.mip.nodes,
             "ccp_rounds: %d" % sol.ccp_rounds,
             "converged: %s" % sol.converged]
    if sol.report is not None:
        head.append("")
        head.append(sol.report.summary())

    audit = eval_residuals(sol.dv, sol.ctx.cset, sol.x)
    head.append("")
    head.append("residual audit")
    head.extend("  " + line for line in audit.summary().splitlines())
    _write(os.path.join(out, "solve_report.txt"), head)

    lines = _header(args, chash) + ["status: %s" % sol.status,
                                    "objective: %.10g" % sol.objective,
                                    "[values]"]
    dv = sol.dv
    for j in range(dv.size):
        lines.append("%s = %.12g" % (dv.names[j], sol.x[j]))
    _write(os.path.join(out, "solution.txt"), lines)
    print("status %s  objective %.6f  -> %s" %
          (sol.status, sol.objective, os.path.join(out, "solution.txt")))
    return _exit_for(sol.status)


def _read_solution(path):
    meta, values = {}, {}
    in_values = False
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line == "[values]":
                in_values = True
                continue
            if in_values:
                name, _, v = line.partition(" = ")
                values[name] = float(v)
            else:
                k, _, v = line.partition(": ")
                meta[k] = v
    return meta, values


def cmd_validate(args):
    case = _load(args)
    chash = _case_hash(case)
    meta, values = _read_solution(args.solution)
    if meta.get("case_hash") != chash:
        print("solution %s was produced from a different case (hash %s, "
              "expected %s)" % (args.solution, meta.get("case_hash"), chash),
              file=sys.stderr)
        return EXIT_BAD_INPUT
    out = _out_dir(args)

    prog, ctx = build_program(case, method=args.method, policy=args.policy,
                              eps=args.eps)
    del prog
    x = np.zeros(ctx.dv.size)
    for name, v in values.items():
        try:
            x[ctx.dv.by_name(name)] = v
        except KeyError:
            continue
    t0 = time.monotonic()
    xi = val.sample_errors(case, args.samples, args.seed,
                           mean_shift=args.mean_shift)
    rep = val.ejvp(case, ctx.dv, x, ctx.conditions, xi)
    _log_timing(out, "validate", time.monotonic() - t0)

    lines = _header(args, chash)
    lines.append("samples: %d" % args.samples)
    lines.extend(rep.summary().splitlines())
    _write(os.path.join(out, "validate_report.txt"), lines)

    rows = [["kind", "name", "rate"]]
    rows.append(["joint", "", "%.6g" % rep.rate])
    for g, r in enumerate(rep.group_rates):
        rows.append(["group", str(g), "%.6g" % r])
    for name, r in rep.worst[:20]:
        rows.append(["condition", name, "%.6g" % r])
    _write(os.path.join(out, "ejvp.csv"), [",".join(r) for r in rows])
    print(rep.summary())
    return EXIT_OK


def _plot_series(path, pairs):
    lines = ["x,y"] + ["%s,%s" % (x, y) for x, y in pairs]
    _write(path, lines)


def cmd_compare_policies(args):
    case = _load(args)
    out = _out_dir(args)
    table = val.run_policy_comparison(case, method=args.method, eps=args.eps,
                                      n_samples=args.samples, seed=args.seed)
    _finish_table(args, case, out, table, "compare_policies.csv")
    return EXIT_OK


def cmd_compare_methods(args):
    case = _load(args)
    out = _out_dir(args)
    table = val.run_method_comparison(case, eps=args.eps,
                                      n_samples=args.samples, seed=args.seed)
    _finish_table(args, case, out, table, "compare_methods.csv")
    return EXIT_OK


def cmd_sweep_hvf(args):
    case = _load(args)
    out = _out_dir(args)
    table = val.sweep_fixed_hvf(case, method=args.method, eps=args.eps)
    _finish_table(args, case, out, table, "sweep_hvf.csv")
    fixed = [(r["w_used"], "%.6g" % r["objective"]) for r in table.rows
             if r.get("objective") is not None and r["w_used"] != ""]
    _plot_series(os.path.join(out, "plot_cost_vs_hvf.csv"), fixed)
    free = [r for r in table.rows if r["w_requested"] == "free"
            and r.get("objective") is not None]
    if free and fixed:
        y = "%.6g" % free[0]["objective"]
        _plot_series(os.path.join(out, "plot_cost_vs_hvf_free.csv"),
                     [(fixed[0][0], y), (fixed[-1][0], y)])
    return EXIT_OK


def cmd_sweep_eps(args):
    case = _load(args)
    out = _out_dir(args)
    table = val.sweep_epsilon(case, method=args.method,
                              n_samples=args.samples, seed=args.seed)
    _finish_table(args, case, out, table, "sweep_eps.csv")
    rows = [r for r in table.rows if r.get("objective") is not None]
    _plot_series(os.path.join(out, "plot_cost_vs_eps.csv"),
                 [(r["epsilon"], "%.6g" % r["objective"]) for r in rows])
    _plot_series(os.path.join(out, "plot_ejvp_vs_eps.csv"),
                 [(r["epsilon"], "%.6g" % r["ejvp"]) for r in rows
                  if r.get("ejvp") is not None])
    return EXIT_OK


def _finish_table(args, case, out, table, fname):
    chash = _case_hash(case)
    for r in table.rows:
        sec = r.get("seconds")
        if sec is not None:
            _log_timing(out, "%s %s" % (table.key, r.get(table.key)), sec)
    table.to_csv(os.path.join(out, fname), exclude=("seconds",))
    text = _header(args, chash) + ["", table.format_text()]
    _write(os.path.join(out, fname.replace(".csv", ".txt")), text)
    print(table.format_text())


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(
        prog="ehcng",
        description="robust day-ahead dispatch for electricity-HCNG networks")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--case", required=True, help="case file (json)")
        p.add_argument("--method", default="MP", choices=METHODS)
        p.add_argument("--policy", default="PP", choices=POLICIES)
        p.add_argument("--eps", type=float, default=None,
                       help="joint risk level; defaults to the case setting")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--samples", type=int, default=10000)
        p.add_argument("--out", default=None,
                       help="output directory (default $EHCNG_OUT or ./out)")
        p.add_argument("--gap", type=float, default=None,
                       help="relative optimality gap override")
        p.add_argument("--ccp-iters", dest="ccp_iters", type=int, default=None)
        p.add_argument("--workers", type=int, default=1,
                       help="reserved; sampling is vectorized in-process")

    p = sub.add_parser("solve", help="solve one case")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="Monte Carlo check of a solution file")
    common(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--mean-shift", action="store_true",
                   help="push the sampling mean to the admitted boundary")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare-policies", help="recourse policy table")
    common(p)
    p.set_defaults(func=cmd_compare_policies)

    p = sub.add_parser("compare-methods", help="decomposition method table")
    common(p)
    p.set_defaults(func=cmd_compare_methods)

    p = sub.add_parser("sweep-hvf", help="cost along the fixed-blend grid")
    common(p)
    p.set_defaults(func=cmd_sweep_hvf)

    p = sub.add_parser("sweep-eps", help="cost and risk along the eps grid")
    common(p)
    p.set_defaults(func=cmd_sweep_eps)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.eps is not None and not 0.0 < args.eps < 1.0:
        print("eps must lie in (0, 1)", file=sys.stderr)
        return EXIT_BAD_INPUT
    if args.workers < 1:
        print("workers must be at least 1", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        case_path = args.case
        if not os.path.exists(case_path):
            print("case file not found: %s" % case_path, file=sys.stderr)
            return EXIT_BAD_INPUT
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
