"""Monte Carlo assessment of solved schedules.

Out-of-sample forecast errors are drawn from the heaviest Gaussian the
ambiguity description admits and pushed through the saved affine recourse;
the empirical joint violation rate is then compared with the design level.
Comparison helpers run batches of solves and tabulate cost, risk and
timing side by side, including infeasible entries, which are first-class
results here.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .affine import generate_tilde_conditions
from .pipeline import solve_case

VIOLATION_TOL = 1e-7

RESERVE_TAGS = frozenset(("reserve_ng", "reserve_gfu", "reserve_p2h",
                          "reserve_source"))


def sample_errors(case, n, seed=0, mean_shift=False):
    """Draw forecast-error paths (n, T * stations) under the worst admitted
    second moment.  By default the mean stays at the nominal forecast;
    mean_shift pushes it to the admitted boundary along the principal
    direction of the base covariance."""
    amb = case.ambiguity_set()
    cov = case.uncertainty.gamma2 * amb.sigma0
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(n), cov.shape[0]))
    mu = amb.mu0
    if mean_shift:
        vals, vecs = np.linalg.eigh(amb.sigma0)
        mu = mu + np.sqrt(case.uncertainty.gamma1 * vals[-1]) * vecs[:, -1]
    return z @ chol.T + mu


def aggregate_errors(case, xi):
    """Per-period totals z_t; shape (n, T)."""
    n_per = len(case.uncertainty.shares)
    return xi.reshape(xi.shape[0], case.T, n_per).sum(axis=2)


@dataclass
class EjvpReport:
    n_samples: int
    rate: float
    half_width: float          # three-sigma band of the estimator
    group_rates: list
    group_spread: float
    worst: list                # (condition name, marginal rate), descending
    excluded_tags: tuple = ()
    tol: float = VIOLATION_TOL

    def summary(self):
        lines = ["joint violation rate %.5f +- %.5f over %d samples"
                 % (self.rate, self.half_width, self.n_samples),
                 "group rates: " + " ".join("%.4f" % g for g in self.group_rates)
                 + "  (spread %.4f)" % self.group_spread]
        for name, r in self.worst[:5]:
            lines.append("  %-40s %.5f" % (name, r))
        return "\n".join(lines)


def ejvp(case, dv, x, conditions, xi, exclude_tags=(), groups=10,
         tol=VIOLATION_TOL):
    """Empirical joint violation probability of the realized conditions.

    A sample violates when any retained condition has a(x) z_t exceeding
    b(x) by more than the tolerance."""
    z = aggregate_errors(case, xi)
    n = z.shape[0]
    excluded = frozenset(exclude_tags)
    hit = np.zeros(n, dtype=bool)
    marginal = []
    for cond in conditions:
        if cond.tag in excluded:
            continue
        a = cond.a.value(x)
        b = cond.b.value(x)
        mask = a * z[:, cond.t - 1] > b + tol
        cnt = int(mask.sum())
        if cnt:
            marginal.append((cond.name, cnt / n))
            hit |= mask
    rate = float(hit.mean())
    half = 3.0 * np.sqrt(max(rate * (1.0 - rate), 1e-12) / n)
    bounds = np.linspace(0, n, groups + 1).astype(int)
    grates = [float(hit[a:b].mean()) for a, b in zip(bounds[:-1], bounds[1:])
              if b > a]
    spread = max(grates) - min(grates) if grates else 0.0
    marginal.sort(key=lambda kv: (-kv[1], kv[0]))
    return EjvpReport(n, rate, float(half), grates, float(spread), marginal,
                      tuple(sorted(excluded)), tol)


def solution_ejvp(sol, xi, exclude_tags=(), groups=10):
    case = sol.ctx.case
    return ejvp(case, sol.dv, sol.x, sol.conditions, xi,
                exclude_tags=exclude_tags, groups=groups)


def absorbed_slack_ejvp(sol, xi, groups=10):
    """Risk of a schedule solved without recourse, under the convention that
    the first dispatchable unit absorbs the whole imbalance.  Reserve
    conditions are ignored: no reserve was procured on purpose."""
    case = sol.ctx.case
    dv = sol.dv
    unit = case.grid.non_gfus[0]
    x = np.asarray(sol.x, dtype=float).copy()
    for t in range(1, case.T + 1):
        x[dv.find("aNG", unit.id, t)] = 1.0
    conds = sol.conditions or generate_tilde_conditions(case, dv)
    return ejvp(case, dv, x, conds, xi,
                exclude_tags=RESERVE_TAGS, groups=groups)


# ---------------------------------------------------------------------------
# batch comparisons


@dataclass
class ComparisonTable:
    key: str                   # name of the swept field
    rows: list = field(default_factory=list)

    def row(self, **kv):
        self.rows.append(kv)
        return kv

    def columns(self):
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def format_text(self):
        cols = self.columns()
        widths = {c: max(len(c), max((len(_fmt(r.get(c))) for r in self.rows),
                                     default=0)) for c in cols}
        out = ["  ".join(c.ljust(widths[c]) for c in cols)]
        for r in self.rows:
            out.append("  ".join(_fmt(r.get(c)).ljust(widths[c]) for c in cols))
        return "\n".join(out)

    def to_csv(self, path, exclude=()):
        cols = [c for c in self.columns() if c not in exclude]
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols)
            wr.writeheader()
            for r in self.rows:
                wr.writerow({k: _fmt(r.get(k)) for k in cols})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.6g" % v
    return str(v)


def _solved_row(table, label, sol, xi, exclude_tags=(), p1=False):
    entry = {table.key: label, "status": sol.status}
    if sol.ok:
        entry["objective"] = sol.objective
        if p1:
            rep = absorbed_slack_ejvp(sol, xi)
        else:
            rep = solution_ejvp(sol, xi, exclude_tags=exclude_tags)
        entry["ejvp"] = rep.rate
        entry["ejvp_band"] = rep.half_width
        if sol.report is not None:
            entry["risk_side"] = sol.report.risk_side
            entry["n_split"] = sol.report.n_split
    else:
        entry["message"] = sol.message or sol.stage
    return entry


def run_method_comparison(case, methods=("MP", "M1", "M2", "M3", "M4"),
                          eps=None, n_samples=20000, seed=0,
                          time_limit=None):
    xi = sample_errors(case, n_samples, seed)
    table = ComparisonTable("method")
    for m in methods:
        t0 = time.monotonic()
        sol = solve_case(case, method=m, eps=eps, time_limit=time_limit)
        row = _solved_row(table, m, sol, xi)
        row["seconds"] = time.monotonic() - t0
        table.rows.append(row)
    return table


def run_policy_comparison(case, policies=("PP", "P1", "P2", "P3", "P4"),
                          method="MP", eps=None, n_samples=20000, seed=0,
                          time_limit=None):
    xi = sample_errors(case, n_samples, seed)
    table = ComparisonTable("policy")
    for p in policies:
        t0 = time.monotonic()
        sol = solve_case(case, method=method, policy=p, eps=eps,
                         time_limit=time_limit)
        row = _solved_row(table, p, sol, xi, p1=(p == "P1"))
        row["seconds"] = time.monotonic() - t0
        table.rows.append(row)
    return table


def sweep_fixed_hvf(case, grid=None, method="MP", eps=None, time_limit=None):
    """Cost along a grid of pinned blend fractions, plus the free-blend run.

    Requested fractions snap to the achievable bit grid, so distinct
    requests can coincide; the snapped value is reported next to the
    requested one."""
    if grid is None:
        grid = [round(0.02 * k, 2) for k in range(11)]
    hvf = case.hcng.hvf
    dw = hvf.cap / (2 ** hvf.bea_depth)
    table = ComparisonTable("w_requested")
    t0 = time.monotonic()
    free = solve_case(case, method=method, eps=eps, time_limit=time_limit)
    row = {"w_requested": "free", "w_used": "",
           "status": free.status}
    if free.ok:
        row["objective"] = free.objective
    row["seconds"] = time.monotonic() - t0
    table.rows.append(row)
    for w in grid:
        snapped = 0.0 if dw == 0.0 else \
            dw * min(max(round(w / dw), 0), 2 ** hvf.bea_depth - 1)
        pinned = _with_initial(case, snapped)
        t0 = time.monotonic()
        sol = solve_case(pinned, method=method, eps=eps, fixed_w=snapped,
                         time_limit=time_limit)
        entry = {"w_requested": "%.3f" % w, "w_used": "%.4f" % snapped,
                 "status": sol.status}
        if sol.ok:
            entry["objective"] = sol.objective
        else:
            entry["message"] = sol.message or sol.stage
        entry["seconds"] = time.monotonic() - t0
        table.rows.append(entry)
    return table


def _with_initial(case, w):
    import copy
    out = copy.deepcopy(case)
    out.hcng.hvf.initial = w
    return out


def sweep_epsilon(case, eps_list=(0.05, 0.10, 0.15, 0.20, 0.25, 0.30),
                  method="MP", n_samples=20000, seed=0, time_limit=None):
    xi = sample_errors(case, n_samples, seed)
    table = ComparisonTable("epsilon")
    for e in eps_list:
        t0 = time.monotonic()
        sol = solve_case(case, method=method, eps=e, time_limit=time_limit)
        row = _solved_row(table, "%.3f" % e, sol, xi)
        row["seconds"] = time.monotonic() - t0
        table.rows.append(row)
    return table
