"""Moment ambiguity set and chance-constraint safety radii.

The set is parameterized by a mean-shift budget gamma1, a covariance
inflation gamma2, and a unimodality order eta.  For a condition
a(x) * e'xi_t <= b(x) held at risk eps_i against every distribution in the
set, the tightening is linear once the sign of a(x) is fixed:

    b(x) >= a(x) * m_t + r(eps_i) * sigma_t * a(x),   a(x) >= 0,

with m_t, sigma_t the mean and standard deviation of e'xi_t under the
nominal moments and r the safety radius below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .model import LinearExpr, Row


class AmbiguitySet:
    """Nominal first/second moments of the stacked error vector xi plus
    the robustness budgets (gamma1, gamma2) and unimodality order eta.

    xi is laid out period-major: entry t*n_per + i is station i in period t.
    Conditions couple xi only through the per-period sum e'xi_t.
    """

    def __init__(self, mu0, sigma0, gamma1, gamma2, eta, n_per, T):
        self.mu0 = np.asarray(mu0, dtype=float)
        self.sigma0 = np.asarray(sigma0, dtype=float)
        self.gamma1 = float(gamma1)
        self.gamma2 = float(gamma2)
        self.eta = float(eta)
        self.n_per = int(n_per)
        self.T = int(T)
        n = self.n_per * self.T
        if self.mu0.shape != (n,):
            raise ValueError("mean vector must have length n_per*T = %d" % n)
        if self.sigma0.shape != (n, n):
            raise ValueError("covariance must be %d x %d" % (n, n))
        if not np.allclose(self.sigma0, self.sigma0.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        if self.gamma1 < 0:
            raise ValueError("gamma1 must be nonnegative")
        if self.gamma2 < 1:
            raise ValueError("gamma2 must be at least 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        self._sqrt = None
        w = np.linalg.eigvalsh(self.sigma0)
        if w.min() <= 0:
            raise ValueError("covariance must be positive definite "
                             "(min eigenvalue %.3e)" % w.min())

    @property
    def dim(self):
        return self.n_per * self.T

    def sqrt_matrix(self):
        if self._sqrt is None:
            w, V = np.linalg.eigh(self.sigma0)
            self._sqrt = (V * np.sqrt(np.maximum(w, 0.0))) @ V.T
        return self._sqrt

    def block(self, t):
        s = slice(t * self.n_per, (t + 1) * self.n_per)
        return self.sigma0[s, s]

    def mean_e(self, t):
        """Mean of e'xi_t."""
        s = slice(t * self.n_per, (t + 1) * self.n_per)
        return float(self.mu0[s].sum())

    def sigma_e(self, t):
        """Standard deviation of e'xi_t under the nominal covariance."""
        return math.sqrt(float(self.block(t).sum()))


def drcc_radius(amb_or_g1, eps_i, gamma2=None, eta=None):
    """Safety radius of the unimodality-skewness ambiguity set.

    Accepts either (AmbiguitySet, eps_i) or (gamma1, eps_i, gamma2, eta).
    """
    if gamma2 is None:
        g1, g2, et = amb_or_g1.gamma1, amb_or_g1.gamma2, amb_or_g1.eta
    else:
        g1, g2, et = float(amb_or_g1), float(gamma2), float(eta)
    if not 0.0 < eps_i < 1.0:
        raise ValueError("risk level must lie in (0, 1), got %r" % eps_i)
    g1p = min(g1, et * (et + 2.0) / (et + 1.0) ** 2 * g2)
    if (g2 / g1p) * ((et + 2.0) / (et + 1.0)) ** 2 < 1.0 / eps_i:
        return math.sqrt(g2 / eps_i) * (et / 2.0 + 1.0) ** (-1.0 / et)
    eta1_sq = (et + 2.0) / et * g2 - ((et + 1.0) / et) ** 2 * g1p
    if eta1_sq <= 0:
        raise ValueError("radius undefined: eta1^2 = %.3e <= 0" % eta1_sq)
    eta1 = math.sqrt(eta1_sq)
    eta2 = (et + 1.0) / et * math.sqrt(g1p)
    inner = (math.sqrt(eps_i * eta2 ** 2 + et * (et + 2.0) * (1.0 - eps_i) * eta1 ** 2)
             - math.sqrt(eps_i * eta2 ** 2)) ** 2
    tau_base = 1.0 - eps_i - inner / ((et + 2.0) ** 2 * eta1 ** 2)
    if tau_base <= 0:
        raise ValueError("radius undefined: tau base %.3e <= 0" % tau_base)
    tau = tau_base ** (-1.0 / et)
    return (math.sqrt(eta2 ** 2 + et * (et + 2.0) * (1.0 / eps_i - 1.0) * eta1 ** 2)
            + (et + 1.0) * eta2) / ((et + 2.0) * tau)


def moment_radius(gamma1, gamma2, eps_i):
    """Radius for the plain mean-covariance ambiguity set (no unimodality)."""
    if not 0.0 < eps_i < 1.0:
        raise ValueError("risk level must lie in (0, 1), got %r" % eps_i)
    return math.sqrt(gamma1) + math.sqrt(gamma2 * (1.0 - eps_i) / eps_i)


def gaussian_z(eps):
    """Standard normal quantile z_{1-eps}."""
    if not 0.0 < eps < 1.0:
        raise ValueError("risk level must lie in (0, 1), got %r" % eps)
    return float(ndtri(1.0 - eps))


@dataclass
class SocRow:
    """rhs >= || cone_arg ||_2 over affine expressions."""
    name: str
    rhs: LinearExpr
    cone_arg: list = field(default_factory=list)

    def is_linear(self):
        return len(self.cone_arg) <= 1


def condition_row(cond, radius, amb, tag="drcc"):
    """Tightened row for a condition whose a(x) is certified nonnegative.

    radius is the already-chosen safety factor (robust, moment, or normal
    quantile); the emitted row is linear because a(x) >= 0 on entry.
    """
    # conditions are stamped with 1-based dispatch periods
    sig = amb.sigma_e(cond.t - 1)
    m = amb.mean_e(cond.t - 1)
    expr = (radius * sig + m) * cond.a - cond.b
    return Row(cond.name + ".tight", tag, expr)


def drcc_to_soc(cond, eps_i, amb):
    """Robust tightening of one sign-resolved condition at risk eps_i."""
    return condition_row(cond, drcc_radius(amb, eps_i), amb)


def gaussian_quantile_row(cond, eps, sigma, amb=None, mean=0.0):
    """Normal-quantile tightening b(x) >= z_{1-eps} * sigma * a(x)."""
    z = gaussian_z(eps)
    expr = (z * sigma + mean) * cond.a - cond.b
    return Row(cond.name + ".tight", "drcc", expr)
