"""Safety radius and ambiguity set behaviour.

The two closed-form radius branches and the moment-only radius are pinned
to values computed independently with mpmath at 50 digits.
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ehcng.ambiguity import (AmbiguitySet, drcc_radius, gaussian_z,
                             moment_radius)

# frozen reference values, gamma1=0.1 gamma2=1.1 eta=1
RADIUS_SMALL_EPS = 4.422166387140533     # eps_i = 0.025, first branch
RADIUS_LARGE_EPS = 1.014887913434158     # eps_i = 0.3, second branch
MOMENT_AT_025 = 6.866036923541964
Z_95 = 1.6448536269514722
Z_975 = 1.959963984540054


def tiny_set(T=2, n_per=1, gamma1=0.1, gamma2=1.1, eta=1.0, sigma=1.0):
    n = T * n_per
    return AmbiguitySet(np.zeros(n), sigma ** 2 * np.eye(n),
                        gamma1, gamma2, eta, n_per, T)


class TestRadius:
    def test_small_eps_branch_frozen(self):
        assert drcc_radius(0.1, 0.025, 1.1, 1.0) == pytest.approx(
            RADIUS_SMALL_EPS, abs=1e-12)

    def test_small_eps_branch_closed_form(self):
        # below the branch threshold (here 1/24.75) the radius reduces to
        # sqrt(g2/eps) * (eta/2+1)^(-1/eta)
        for eps in (0.01, 0.02, 0.025):
            expect = math.sqrt(1.1 / eps) * (1.0 / 1.5)
            assert drcc_radius(0.1, eps, 1.1, 1.0) == pytest.approx(expect, rel=1e-14)

    def test_large_eps_branch_frozen(self):
        assert drcc_radius(0.1, 0.3, 1.1, 1.0) == pytest.approx(
            RADIUS_LARGE_EPS, abs=1e-9)

    def test_accepts_set_or_scalars(self):
        amb = tiny_set()
        assert drcc_radius(amb, 0.025) == drcc_radius(0.1, 0.025, 1.1, 1.0)

    @given(st.floats(0.005, 0.45))
    def test_decreasing_in_eps(self, eps):
        r1 = drcc_radius(0.1, eps, 1.1, 1.0)
        r2 = drcc_radius(0.1, min(eps * 1.25, 0.46), 1.1, 1.0)
        assert r2 <= r1 + 1e-12

    @given(st.floats(1.0, 3.0), st.floats(0.01, 0.4))
    def test_increasing_in_gamma2(self, g2, eps):
        r1 = drcc_radius(0.1, eps, g2, 1.0)
        r2 = drcc_radius(0.1, eps, g2 * 1.2, 1.0)
        assert r2 >= r1 - 1e-12

    def test_dominated_by_moment_radius(self):
        # structure information can only shrink the safety margin
        for eps in (0.025, 0.05, 0.1, 0.2, 0.3):
            assert drcc_radius(0.1, eps, 1.1, 1.0) <= moment_radius(0.1, 1.1, eps)

    def test_rejects_bad_risk_levels(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                drcc_radius(0.1, bad, 1.1, 1.0)


class TestMomentRadius:
    def test_frozen_value(self):
        assert moment_radius(0.1, 1.1, 0.025) == pytest.approx(MOMENT_AT_025, abs=1e-12)

    def test_closed_form(self):
        g1, g2, eps = 0.2, 1.5, 0.1
        expect = math.sqrt(g1) + math.sqrt(g2 * (1 - eps) / eps)
        assert moment_radius(g1, g2, eps) == pytest.approx(expect, rel=1e-14)

    def test_gaussian_quantiles_frozen(self):
        assert gaussian_z(0.05) == pytest.approx(Z_95, abs=1e-14)
        assert gaussian_z(0.025) == pytest.approx(Z_975, abs=1e-14)

    def test_quantile_dominated_by_robust(self):
        # the distribution-free radius must cover the Gaussian case
        for eps in (0.025, 0.05, 0.1, 0.2):
            assert gaussian_z(eps) < moment_radius(0.0, 1.0, eps)


class TestAmbiguitySet:
    def test_period_aggregation(self):
        n_per, T = 2, 3
        sigma = np.diag([1.0, 4.0] * T)
        mu = np.arange(6, dtype=float)
        amb = AmbiguitySet(mu, sigma, 0.1, 1.1, 1.0, n_per, T)
        assert amb.mean_e(1) == pytest.approx(2 + 3)
        assert amb.sigma_e(0) == pytest.approx(math.sqrt(5.0))

    def test_correlated_block_sum(self):
        cov = np.array([[1.0, 0.5], [0.5, 2.0]])
        amb = AmbiguitySet(np.zeros(2), cov, 0.1, 1.1, 1.0, 2, 1)
        assert amb.sigma_e(0) == pytest.approx(math.sqrt(1 + 2 + 2 * 0.5))

    def test_sqrt_matrix_squares_back(self):
        rng = np.random.default_rng(7)
        B = rng.standard_normal((4, 4))
        cov = B @ B.T + 4 * np.eye(4)
        amb = AmbiguitySet(np.zeros(4), cov, 0.1, 1.1, 1.0, 2, 2)
        g = amb.sqrt_matrix()
        assert np.allclose(g @ g, cov, atol=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            AmbiguitySet(np.zeros(3), np.eye(2), 0.1, 1.1, 1.0, 2, 1)
        with pytest.raises(ValueError):
            AmbiguitySet(np.zeros(2), np.eye(2), -0.1, 1.1, 1.0, 2, 1)
        with pytest.raises(ValueError):
            AmbiguitySet(np.zeros(2), np.eye(2), 0.1, 0.9, 1.0, 2, 1)
        with pytest.raises(ValueError):
            AmbiguitySet(np.zeros(2), np.zeros((2, 2)), 0.1, 1.1, 1.0, 2, 1)
