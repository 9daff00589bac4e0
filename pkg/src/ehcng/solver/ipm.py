"""Homogeneous self-dual interior-point method for second-order cone programs.

Internal form:  min c'x  s.t.  A x = b,  G x + s = h,  s in K,
with K a product of a nonnegative orthant and small second-order cones.
Bounds become orthant rows, pinned variables become equality rows, and
diagonal quadratic objective terms are lifted to three-dimensional cones
before the loop starts, so the core never special-cases any of them.

The search direction is the Nesterov-Todd scaled Mehrotra
predictor-corrector; each iteration factors one quasi-definite reduced
KKT matrix (dense LU for small problems, sparse LU otherwise) and reuses
it for the three solves.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INF = float("inf")


@dataclass
class SolverSettings:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    tol_infeas: float = 1e-8
    tol_loose: float = 2e-4
    max_iter: int = 200
    step_frac: float = 0.99
    reg: float = 1e-9
    kicks: int = 8
    dense_limit: int = 600
    ruiz_iters: int = 3
    refine_iters: int = 2
    int_tol: float = 1e-6
    mip_gap: float = 5e-3
    node_limit: int = 50000
    time_limit: float = None
    verbose: int = 0


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray = None
    obj: float = math.nan
    iterations: int = 0
    pres: float = math.nan
    dres: float = math.nan
    relgap: float = math.nan
    message: str = ""
    audit: dict = field(default_factory=dict)
    certificate: np.ndarray = None

    @property
    def ok(self):
        return self.status == "optimal"


class Standardized:
    """Scaled internal-form data plus the bookkeeping to map back."""

    def __init__(self):
        self.n = 0
        self.p = 0
        self.m = 0
        self.cone_l = 0
        self.socs = []          # (start, dim) within s
        self.A = None
        self.b = None
        self.G = None
        self.h = None
        self.c = None
        self.obj_const = 0.0
        self.obj_scale = 1.0
        self.col_scale = None   # x_orig = col_scale * x_scaled  (first n_prog entries)
        self.n_prog = 0
        self.quad_items = []    # (prog idx, coef) in lift order


def standardize(prog, lb, ub, settings):
    """Build scaled internal-form arrays from a program and working bounds."""
    n_prog = prog.n
    quad_items = sorted(prog.quad.items())
    nq = len(quad_items)
    n = n_prog + nq

    pin_tol = 1e-12
    pinned = np.isfinite(lb) & np.isfinite(ub) \
        & (np.abs(ub - lb) <= pin_tol * np.maximum(1.0, np.abs(lb)))

    a_rows = []  # (idx array, coef array, rhs)
    for idx, coef, rhs in zip(prog.A_idx, prog.A_coef, prog.A_rhs):
        a_rows.append((idx, coef, rhs))
    for j in np.nonzero(pinned)[0]:
        a_rows.append((np.array([j], dtype=np.int64), np.array([1.0]),
                       0.5 * (lb[j] + ub[j])))

    g_rows = []  # orthant rows: g'x <= h
    for idx, coef, rhs in zip(prog.G_idx, prog.G_coef, prog.G_rhs):
        g_rows.append((idx, coef, rhs))
    one = np.array([1.0])
    for j in range(n_prog):
        if pinned[j]:
            continue
        if lb[j] > -INF:
            g_rows.append((np.array([j], dtype=np.int64), -one, -lb[j]))
        if ub[j] < INF:
            g_rows.append((np.array([j], dtype=np.int64), one, ub[j]))

    cone_l = len(g_rows)
    soc_rows = []   # (idx array, coef array, rhs) per cone member row: s = h - g'x
    socs = []
    pos = cone_l
    for _, head, tails in prog.soc:
        dim = 1 + len(tails)
        socs.append((pos, dim))
        for j in [head] + list(tails):
            soc_rows.append((np.array([j], dtype=np.int64), -one, 0.0))
        pos += dim
    # quadratic lift: q*x_j^2 -> q*u with u >= x_j^2, i.e. (u+1, 2x_j, u-1) in Q3
    for k, (j, _q) in enumerate(quad_items):
        u = n_prog + k
        socs.append((pos, 3))
        soc_rows.append((np.array([u], dtype=np.int64), np.array([-1.0]), 1.0))
        soc_rows.append((np.array([j], dtype=np.int64), np.array([-2.0]), 0.0))
        soc_rows.append((np.array([u], dtype=np.int64), np.array([-1.0]), -1.0))
        pos += 3

    std = Standardized()
    std.n = n
    std.n_prog = n_prog
    std.quad_items = quad_items
    std.cone_l = cone_l
    std.socs = socs
    std.p = len(a_rows)
    std.m = pos

    def to_csr(rows, ncols):
        data, ri, ci = [], [], []
        rhs = np.zeros(len(rows))
        for i, (idx, coef, r) in enumerate(rows):
            ri.extend([i] * len(idx))
            ci.extend(idx.tolist())
            data.extend(coef.tolist())
            rhs[i] = r
        mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), ncols))
        return mat, rhs

    A, b = to_csr(a_rows, n)
    G, h = to_csr(g_rows + soc_rows, n)

    c = np.zeros(n)
    c[:n_prog] = prog.c
    for k, (_j, q) in enumerate(quad_items):
        c[n_prog + k] = q

    # Ruiz equilibration; one scalar per second-order block keeps cone geometry
    d_col = np.ones(n)
    r_a = np.ones(std.p)
    r_g = np.ones(std.m)
    block_of = np.full(std.m, -1, dtype=np.int64)
    for bi, (s0, dim) in enumerate(socs):
        block_of[s0:s0 + dim] = bi
    for _ in range(settings.ruiz_iters):
        Anorm = _row_inf_norms(A)
        Gnorm = _row_inf_norms(G)
        for s0, dim in socs:
            Gnorm[s0:s0 + dim] = max(Gnorm[s0:s0 + dim].max(), 1e-12)
        ra = 1.0 / np.sqrt(np.maximum(Anorm, 1e-12))
        rg = 1.0 / np.sqrt(np.maximum(Gnorm, 1e-12))
        A = sp.diags(ra) @ A
        G = sp.diags(rg) @ G
        b *= ra
        h *= rg
        r_a *= ra
        r_g *= rg
        cn = np.maximum(_col_inf_norms(A, n), _col_inf_norms(G, n))
        dc = 1.0 / np.sqrt(np.maximum(cn, 1e-12))
        A = A @ sp.diags(dc)
        G = G @ sp.diags(dc)
        d_col *= dc
    c = c * d_col
    obj_scale = max(1.0, np.abs(c).max() if n else 1.0)
    c /= obj_scale

    std.A = A.tocsr()
    std.G = G.tocsr()
    std.b = b
    std.h = h
    std.c = c
    std.col_scale = d_col
    std.obj_scale = obj_scale
    std.obj_const = prog.c0
    return std


def _row_inf_norms(M):
    if not M.nnz:
        return np.zeros(M.shape[0])
    return np.asarray(abs(M).max(axis=1).todense()).ravel()


def _col_inf_norms(M, n):
    if not M.nnz:
        return np.zeros(n)
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


# ---------------------------------------------------------------------------
# cone algebra over the flat s/z layout

class Cone:
    def __init__(self, l, socs):
        self.l = l
        self.socs = socs
        self.degree = l + len(socs)

    def unit(self, m):
        e = np.zeros(m)
        e[:self.l] = 1.0
        for s0, _d in self.socs:
            e[s0] = 1.0
        return e

    def margin(self, u):
        worst = u[:self.l].min() if self.l else INF
        for s0, d in self.socs:
            worst = min(worst, u[s0] - np.linalg.norm(u[s0 + 1:s0 + d]))
        return worst

    def to_interior(self, u, m):
        a = self.margin(u)
        if a < 1e-8:
            u = u + (1.0 - a) * self.unit(m)
        return u

    def step_len(self, u, du):
        """Largest step with u + alpha*du staying in the cone."""
        alpha = INF
        if self.l:
            neg = du[:self.l] < 0
            if neg.any():
                alpha = min(alpha, np.min(-u[:self.l][neg] / du[:self.l][neg]))
        for s0, d in self.socs:
            u0, u1 = u[s0], u[s0 + 1:s0 + d]
            d0, d1 = du[s0], du[s0 + 1:s0 + d]
            aa = d0 * d0 - d1 @ d1
            bb = 2.0 * (u0 * d0 - u1 @ d1)
            cc = max(u0 * u0 - u1 @ u1, 1e-300)
            alpha = min(alpha, _smallest_pos_root(aa, bb, cc))
        return alpha

    def step_blocker(self, u, du):
        """Like step_len but also names the limiting component."""
        alpha, who = INF, None
        if self.l:
            neg = np.where(du[:self.l] < 0)[0]
            if neg.size:
                ratios = -u[neg] / du[neg]
                k = np.argmin(ratios)
                if ratios[k] < alpha:
                    alpha, who = ratios[k], ("lin", int(neg[k]))
        for kblk, (s0, d) in enumerate(self.socs):
            u0, u1 = u[s0], u[s0 + 1:s0 + d]
            d0, d1 = du[s0], du[s0 + 1:s0 + d]
            aa = d0 * d0 - d1 @ d1
            bb = 2.0 * (u0 * d0 - u1 @ d1)
            cc = max(u0 * u0 - u1 @ u1, 1e-300)
            r = _smallest_pos_root(aa, bb, cc)
            if r < alpha:
                alpha, who = r, ("soc", kblk)
        return alpha, who


def _smallest_pos_root(a, b, c):
    # c > 0; want the smallest alpha > 0 with a*alpha^2 + b*alpha + c = 0
    if a == 0.0:
        return INF if b >= 0 else -c / b
    disc = b * b - 4.0 * a * c
    if a > 0 and (disc < 0 or b >= 0):
        return INF
    sd = math.sqrt(max(disc, 0.0))
    if a > 0:
        # b < 0 here; smaller root is positive
        return (2.0 * c) / (-b + sd)
    # a < 0: exactly one positive root
    return (-b - sd) / (2.0 * a) if (-b - sd) / (2.0 * a) > 0 else (-b + sd) / (2.0 * a)


class NTScaling:
    """Nesterov-Todd scaling point for the orthant and the small cones."""

    def __init__(self, cone, s, z):
        self.cone = cone
        l = cone.l
        self.ok = True
        if l:
            if s[:l].min() <= 0 or z[:l].min() <= 0:
                self.ok = False
                return
            self.w_lp = np.sqrt(s[:l] / z[:l])
            self.lam_lp = np.sqrt(s[:l] * z[:l])
        else:
            self.w_lp = np.zeros(0)
            self.lam_lp = np.zeros(0)
        self.soc = []
        for s0, d in cone.socs:
            ss, zz = s[s0:s0 + d], z[s0:s0 + d]
            js = ss[0] ** 2 - ss[1:] @ ss[1:]
            jz = zz[0] ** 2 - zz[1:] @ zz[1:]
            if js <= 0 or jz <= 0:
                self.ok = False
                return
            sb = ss / math.sqrt(js)
            zb = zz / math.sqrt(jz)
            gamma = math.sqrt((1.0 + sb @ zb) / 2.0)
            wbar = sb.copy()
            wbar[0] += zb[0]
            wbar[1:] -= zb[1:]
            wbar /= (2.0 * gamma)
            eta = (js / jz) ** 0.25
            lam = self._mult_w_block(eta, wbar, zz)
            self.soc.append((s0, d, eta, wbar, lam))

    @staticmethod
    def _mult_w_block(eta, wbar, u):
        w0, w1 = wbar[0], wbar[1:]
        u0, u1 = u[0], u[1:]
        dot = w1 @ u1
        out = np.empty_like(u)
        out[0] = eta * (w0 * u0 + dot)
        out[1:] = eta * (u1 + (u0 + dot / (1.0 + w0)) * w1)
        return out

    @staticmethod
    def _mult_winv_block(eta, wbar, u):
        w0, w1 = wbar[0], wbar[1:]
        u0, u1 = u[0], u[1:]
        dot = w1 @ u1
        out = np.empty_like(u)
        out[0] = (w0 * u0 - dot) / eta
        out[1:] = (u1 + (-u0 + dot / (1.0 + w0)) * w1) / eta
        return out

    def lam(self, m):
        out = np.zeros(m)
        out[:self.cone.l] = self.lam_lp
        for s0, d, _e, _w, lam in self.soc:
            out[s0:s0 + d] = lam
        return out

    def mult_W(self, u):
        out = np.empty_like(u)
        l = self.cone.l
        out[:l] = self.w_lp * u[:l]
        for s0, d, eta, wbar, _lam in self.soc:
            out[s0:s0 + d] = self._mult_w_block(eta, wbar, u[s0:s0 + d])
        return out

    def mult_Winv(self, u):
        out = np.empty_like(u)
        l = self.cone.l
        out[:l] = u[:l] / self.w_lp
        for s0, d, eta, wbar, _lam in self.soc:
            out[s0:s0 + d] = self._mult_winv_block(eta, wbar, u[s0:s0 + d])
        return out

    def hinv_parts(self, m):
        """H^-1 = diag(dvec) + V V' with one V column per second-order block."""
        l = self.cone.l
        dvec = np.zeros(m)
        dvec[:l] = 1.0 / (self.w_lp ** 2)
        cols_i, cols_j, cols_v = [], [], []
        for k, (s0, d, eta, wbar, _lam) in enumerate(self.soc):
            jdiag = np.full(d, 1.0)
            jdiag[0] = -1.0
            dvec[s0:s0 + d] = jdiag / (eta * eta)
            v = wbar.copy()
            v[1:] = -v[1:]                      # J wbar
            col = (math.sqrt(2.0) / eta) * v
            cols_i.extend(range(s0, s0 + d))
            cols_j.extend([k] * d)
            cols_v.extend(col.tolist())
        V = sp.csc_matrix((cols_v, (cols_i, cols_j)), shape=(m, len(self.soc)))
        return dvec, V

    def mult_Hinv(self, u, dvec, V):
        out = dvec * u
        if V.shape[1]:
            out = out + V @ (V.T @ u)
        return out

    def mult_H(self, u):
        # H = W'W; W symmetric here
        return self.mult_W(self.mult_W(u))


def _jprod(cone, u, v):
    out = np.empty_like(u)
    l = cone.l
    out[:l] = u[:l] * v[:l]
    for s0, d in cone.socs:
        uu, vv = u[s0:s0 + d], v[s0:s0 + d]
        out[s0] = uu @ vv
        out[s0 + 1:s0 + d] = uu[0] * vv[1:] + vv[0] * uu[1:]
    return out


def _jdiv(cone, lam, d):
    """Solve lam o u = d."""
    out = np.empty_like(d)
    l = cone.l
    out[:l] = d[:l] / lam[:l]
    for s0, dim in cone.socs:
        lm, dd = lam[s0:s0 + dim], d[s0:s0 + dim]
        det = lm[0] ** 2 - lm[1:] @ lm[1:]
        u0 = (lm[0] * dd[0] - lm[1:] @ dd[1:]) / det
        out[s0] = u0
        out[s0 + 1:s0 + dim] = (dd[1:] - u0 * lm[1:]) / lm[0]
    return out


# ---------------------------------------------------------------------------
# KKT factor-and-solve with static regularisation and refinement

class KKTSolver:
    def __init__(self, std, settings):
        self.std = std
        self.cfg = settings
        self.dense = (std.n + std.p) <= settings.dense_limit
        self.A = std.A
        self.G = std.G
        self.AT = std.A.T.tocsr()
        self.GT = std.G.T.tocsr()
        if self.dense:
            self.Ad = std.A.toarray()
            self.Gd = std.G.toarray()

    def factor(self, scaling):
        n, p, m = self.std.n, self.std.p, self.std.m
        dvec, V = scaling.hinv_parts(m)
        self.dvec, self.V = dvec, V
        self.scaling = scaling
        delta = self.cfg.reg
        if self.dense:
            P = self.Gd.T @ (dvec[:, None] * self.Gd)
            if V.shape[1]:
                U = self.Gd.T @ V.toarray()
                P += U @ U.T
            K = np.zeros((n + p, n + p))
            K[:n, :n] = P + delta * np.eye(n)
            K[:n, n:] = self.Ad.T
            K[n:, :n] = self.Ad
            K[n:, n:] = -delta * np.eye(p)
            self.fac = sla.lu_factor(K)
        else:
            P = (self.GT @ sp.diags(dvec) @ self.G).tocsc()
            if V.shape[1]:
                U = (self.GT @ V).tocsc()
                P = (P + U @ U.T).tocsc()
            K = sp.bmat([
                [P + delta * sp.identity(n), self.AT if p else None],
                [self.A if p else None, -delta * sp.identity(p) if p else None],
            ], format="csc") if p else (P + delta * sp.identity(n)).tocsc()
            self.fac = spla.splu(K, permc_spec="MMD_AT_PLUS_A")

    def _apply_exact(self, dx, dy):
        # [P dx + A' dy ; A dx] without regularisation
        t = self.G @ dx
        t = self.scaling.mult_Hinv(t, self.dvec, self.V)
        top = self.GT @ t
        if self.std.p:
            top = top + self.AT @ dy
            bot = self.A @ dx
        else:
            bot = np.zeros(0)
        return top, bot

    def _solve_once(self, r1, r2):
        n, p = self.std.n, self.std.p
        rhs = np.concatenate([r1, r2]) if p else r1
        if self.dense:
            sol = sla.lu_solve(self.fac, rhs)
        else:
            sol = self.fac.solve(rhs)
        return sol[:n], sol[n:]

    def solve(self, r1, r2, r3):
        """K3 solve: [0 A' G'; A 0 0; G 0 -H] (dx,dy,dz) = (r1,r2,r3)."""
        t = self.scaling.mult_Hinv(r3, self.dvec, self.V)
        g1 = r1 + self.GT @ t
        dx, dy = self._solve_once(g1, r2)
        for _ in range(self.cfg.refine_iters):
            e1, e2 = self._apply_exact(dx, dy)
            c1, c2 = g1 - e1, r2 - e2
            nr = math.sqrt(c1 @ c1 + (c2 @ c2 if self.std.p else 0.0))
            base = math.sqrt(g1 @ g1 + (r2 @ r2 if self.std.p else 0.0))
            if nr <= 1e-13 * max(1.0, base):
                break
            ex, ey = self._solve_once(c1, c2)
            dx = dx + ex
            dy = dy + ey
        dz = self.scaling.mult_Hinv(self.G @ dx - r3, self.dvec, self.V)
        return dx, dy, dz


# ---------------------------------------------------------------------------
# main loop

def solve_standardized(std, settings):
    n, p, m = std.n, std.p, std.m
    cone = Cone(std.cone_l, std.socs)
    A, b, G, h, c = std.A, std.b, std.G, std.h, std.c

    if m == 0:
        # fully pinned problem: equalities only
        x, res, _rank, _sv = np.linalg.lstsq(A.toarray(), b, rcond=None) if p else (np.zeros(n), [0.0], 0, None)
        feas = np.linalg.norm(A @ x - b) if p else 0.0
        if feas > 1e-7 * (1 + np.linalg.norm(b)):
            return ConicSolution("primal_infeasible", message="inconsistent pinned system"), None
        return ConicSolution("optimal", x=x, iterations=0, pres=feas, dres=0.0, relgap=0.0), None

    kkt = KKTSolver(std, settings)

    # initial point: least-norm primal/dual guesses shifted into the cone
    init_scaling = _IdentityScaling(cone, m)
    kkt.factor(init_scaling)
    x0, _y0, z0t = kkt.solve(np.zeros(n), b.copy(), h.copy())
    s = cone.to_interior(-z0t, m)
    xd, y, zd = kkt.solve(-c, np.zeros(p), np.zeros(m))
    z = cone.to_interior(zd, m)
    x = x0
    tau, kap = 1.0, 1.0

    nu = cone.degree + 1
    best = None
    best_score = INF
    best_it = 0
    stall_anchor = INF
    n_small_steps = 0
    kicks_left = settings.kicks
    norm_b = 1.0 + np.linalg.norm(b)
    norm_h = 1.0 + np.linalg.norm(h)
    norm_c = 1.0 + np.linalg.norm(c)

    status, msg = "max_iter", ""
    it = 0
    for it in range(1, settings.max_iter + 1):
        rx = (kkt.AT @ y if p else 0.0) + kkt.GT @ z + c * tau
        ry = (A @ x - b * tau) if p else np.zeros(0)
        rz = s + G @ x - h * tau
        rt = kap + c @ x + (b @ y if p else 0.0) + h @ z
        mu = (s @ z + tau * kap) / nu

        pcost = (c @ x) / tau
        dcost = -((b @ y if p else 0.0) + h @ z) / tau
        gap = s @ z / (tau * tau)
        pres = max(np.linalg.norm(ry) / norm_b, np.linalg.norm(rz) / norm_h) / tau
        dres = np.linalg.norm(rx) / norm_c / tau
        relgap = gap / max(1.0, abs(pcost))

        score = max(pres, dres, relgap)
        if score < best_score:
            best_score = score
            best = (x / tau, y / tau, z / tau, s / tau, pres, dres, relgap, it)
        if score < 0.75 * stall_anchor:
            stall_anchor = score
            best_it = it
        elif best_score <= settings.tol_loose and it - best_it >= 25:
            # inside the loose band and no real progress for a while:
            # further grinding just cycles on the degenerate boundary
            status, msg = "numerical", "progress stalled"
            break

        if settings.verbose >= 2:
            print("  it %3d  mu %9.2e  pres %9.2e  dres %9.2e  gap %9.2e  "
                  "tau %9.2e  kap %9.2e" % (it, mu, pres, dres, relgap, tau, kap))

        if pres <= settings.tol_feas and dres <= settings.tol_feas and \
                relgap <= settings.tol_gap:
            status = "optimal"
            break

        # infeasibility certificates
        by_hz = (b @ y if p else 0.0) + h @ z
        if by_hz < -1e-12:
            u = np.linalg.norm(kkt.AT @ y + kkt.GT @ z if p else kkt.GT @ z)
            if u / max(1.0, norm_c) <= settings.tol_infeas * (-by_hz):
                status, msg = "primal_infeasible", "farkas certificate"
                best = (None, y / max(-by_hz, 1e-30), z / max(-by_hz, 1e-30),
                        None, pres, dres, relgap, it)
                break
        ctx = c @ x
        if ctx < -1e-12:
            u = max(np.linalg.norm(A @ x) if p else 0.0,
                    np.linalg.norm(G @ x + s))
            if u / max(norm_b, norm_h) <= settings.tol_infeas * (-ctx):
                status, msg = "dual_infeasible", "unbounded ray"
                best = (x / max(-ctx, 1e-30), None, None, None, pres, dres, relgap, it)
                break

        scaling = NTScaling(cone, s, z)
        if not scaling.ok:
            status, msg = "numerical", "scaling point left the cone"
            break
        lam = scaling.lam(m)
        try:
            kkt.factor(scaling)
        except (RuntimeError, ValueError) as exc:
            status, msg = "numerical", "factorisation failed: %s" % exc
            break

        vx, vy, vz = kkt.solve(-c, b.copy(), h.copy())

        def direction(sigma, ds_extra, dt_extra):
            eta_r = 1.0 - sigma
            ds = -_jprod(cone, lam, lam) + ds_extra
            ds[:cone.l] += sigma * mu
            for s0, _d in cone.socs:
                ds[s0] += sigma * mu
            dt = -tau * kap + sigma * mu + dt_extra
            r3 = -eta_r * rz - scaling.mult_W(_jdiv(cone, lam, ds))
            ux, uy, uz = kkt.solve(-eta_r * rx, -eta_r * ry, r3)
            den = (c @ vx + (b @ vy if p else 0.0) + h @ vz) - kap / tau
            num = -eta_r * rt - dt / tau - (c @ ux + (b @ uy if p else 0.0) + h @ uz)
            if abs(den) < 1e-14:
                return None
            dtau = num / den
            dx = ux + dtau * vx
            dy = uy + dtau * vy if p else uy
            dz = uz + dtau * vz
            dsv = scaling.mult_W(_jdiv(cone, lam, ds)) - scaling.mult_H(dz)
            dkap = (dt - kap * dtau) / tau
            return dx, dy, dz, dsv, dtau, dkap

        aff = direction(0.0, np.zeros(m), 0.0)
        if aff is None:
            status, msg = "numerical", "singular step equation"
            break
        adx, ady, adz, ads, adtau, adkap = aff
        alpha_aff = min(cone.step_len(s, ads), cone.step_len(z, adz),
                        _scalar_step(tau, adtau), _scalar_step(kap, adkap), 1.0)
        mu_aff = ((s + alpha_aff * ads) @ (z + alpha_aff * adz) +
                  (tau + alpha_aff * adtau) * (kap + alpha_aff * adkap)) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        corr = -_jprod(cone, scaling.mult_Winv(ads), scaling.mult_W(adz))
        comb = direction(sigma, corr, -adtau * adkap)
        if comb is None:
            status, msg = "numerical", "singular step equation"
            break
        dx, dy, dz, dsv, dtau, dkap = comb
        alpha = settings.step_frac * min(
            cone.step_len(s, dsv), cone.step_len(z, dz),
            _scalar_step(tau, dtau), _scalar_step(kap, dkap))
        alpha = min(alpha, 1.0)
        if settings.verbose >= 3:
            a_s, who_s = cone.step_blocker(s, dsv)
            a_z, who_z = cone.step_blocker(z, dz)
            print("    sigma %6.3f  a_s %8.2e %s  a_z %8.2e %s  "
                  "a_tau %8.2e a_kap %8.2e" %
                  (sigma, a_s, who_s, a_z, who_z,
                   _scalar_step(tau, dtau), _scalar_step(kap, dkap)))
        if alpha <= 1e-4:
            n_small_steps += 1
            if n_small_steps >= 2 and kicks_left > 0:
                # Mehrotra stalls when a degenerate boundary pins every step:
                # sigma -> 1 and the residuals freeze.  Lift both cone
                # iterates off the boundary and let the scaling recover.
                kicks_left -= 1
                n_small_steps = 0
                shift = math.sqrt(max(mu, 1e-14))
                e = cone.unit(m)
                # lift only pairs that sit on the boundary from both sides;
                # pushing well-separated pairs would just inflate mu
                low = np.minimum(s, z) < shift
                mask = np.zeros(m)
                mask[: cone.l][low[: cone.l]] = 1.0
                for s0, d in cone.socs:
                    ms = s[s0] - np.linalg.norm(s[s0 + 1:s0 + d])
                    mz = z[s0] - np.linalg.norm(z[s0 + 1:s0 + d])
                    if min(ms, mz) < shift:
                        mask[s0] = 1.0
                s = s + shift * (mask * e + 1e-3 * shift * e)
                z = z + shift * (mask * e + 1e-3 * shift * e)
                if settings.verbose >= 2:
                    print("    boundary kick, shift %.2e, %d pairs"
                          % (shift, int(mask.sum())))
                continue
            if n_small_steps >= 3:
                status, msg = "numerical", "step length collapsed"
                break
        else:
            n_small_steps = 0

        x = x + alpha * dx
        if p:
            y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * dsv
        tau += alpha * dtau
        kap += alpha * dkap
        if tau <= 1e-12:
            status, msg = "numerical", "tau collapsed"
            break

    if best is None:
        return ConicSolution("numerical", message=msg or "no iterate"), None
    bx, by, bz, bs, pres, dres, relgap, bit = best
    sol = ConicSolution(status, x=bx, iterations=it, pres=pres, dres=dres,
                        relgap=relgap, message=msg)
    if status == "primal_infeasible":
        sol.certificate = bz
    elif status == "dual_infeasible":
        sol.certificate = bx
    elif status in ("max_iter", "numerical"):
        # near-solution iterates are still useful to callers that can tell;
        # degenerate active sets routinely stall a few decades short of the
        # strict target, so accept the best iterate within the loose band
        if pres <= settings.tol_loose and dres <= settings.tol_loose \
                and relgap <= settings.tol_loose:
            sol.status = "optimal"
            sol.message = (msg + "; loose tolerance accepted").strip("; ")
    return sol, (by, bz, bs)


class _IdentityScaling:
    def __init__(self, cone, m):
        self.cone = cone
        self.m = m

    def hinv_parts(self, m):
        return np.ones(m), sp.csc_matrix((m, 0))

    def mult_Hinv(self, u, dvec, V):
        return u

    def mult_W(self, u):
        return u

    def mult_H(self, u):
        return u


def _scalar_step(v, dv):
    return INF if dv >= 0 else -v / dv


def solve_relaxation(prog, settings=None, lb=None, ub=None):
    """Solve the continuous relaxation of a conic program.

    Returns a ConicSolution with x in the program's variable space and the
    objective evaluated on the unscaled point (quadratic terms included).
    """
    settings = settings or SolverSettings()
    lb = prog.lb if lb is None else lb
    ub = prog.ub if ub is None else ub
    if np.any(lb > ub + 1e-12):
        return ConicSolution("primal_infeasible", message="crossed bounds")
    std = standardize(prog, lb, ub, settings)
    sol, duals = solve_standardized(std, settings)
    if sol.x is not None and sol.status in ("optimal", "dual_infeasible"):
        xs = sol.x.copy()
        sol.x = (xs * std.col_scale)[:std.n_prog]
        if sol.status == "optimal":
            sol.obj = prog.objective_value(sol.x)
            sol.audit = kkt_audit(std, xs, duals)
    return sol


def kkt_audit(std, xs, duals):
    """Recompute optimality measures from the returned vectors alone.

    Works on the scaled internal-form data; xs is the scaled primal point.
    """
    if duals is None or (duals[0] is None and std.p):
        return {}
    y, z, _s = duals
    s_chk = std.h - std.G @ xs
    stat = np.linalg.norm((std.A.T @ y if std.p else 0.0) + std.G.T @ z + std.c)
    pfeas = np.linalg.norm(std.A @ xs - std.b) if std.p else 0.0
    comp = abs(s_chk @ z)
    return {
        "stationarity": float(stat / max(1.0, np.linalg.norm(std.c))),
        "primal": float(pfeas / (1.0 + np.linalg.norm(std.b))),
        "complementarity": float(comp / max(1.0, abs(std.c @ xs))),
        "cone_margin": float(Cone(std.cone_l, std.socs).margin(s_chk)),
    }
