import math
import warnings

import numpy as np
import pytest

from graphsmooth.errors import ConfigMismatch
from graphsmooth.model import RegressionModelConfig, d2_regression_config, selector
from graphsmooth.theory import (
    RegressionPhi,
    TheoryCurveConfig,
    check_assumption_reg,
    cls_error_sums,
    cls_risk_curve,
    fit_error_constant,
    gaussian_kernel_moments,
    phi_cl,
    phi_reg,
    r_cl,
    r_reg,
    reg_curve_closed_form,
    reg_risk_curve,
    reg_risk_curve_general,
    shrink_eigenvalues,
    sigma_k,
)

from oracles import moment_monte_carlo


def random_pd(rng, d, low=0.2, high=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(low, high, d)) @ q.T


class TestSigmaK:
    def test_k0_unchanged(self):
        s = random_pd(np.random.default_rng(0), 3)
        np.testing.assert_array_equal(sigma_k(s, 0), s)

    def test_scalar_map_values(self):
        assert shrink_eigenvalues(2.0, 1) == pytest.approx(8 / 9)
        assert shrink_eigenvalues(0.5, 1) == pytest.approx(1 / 18)

    def test_matches_matrix_formula(self):
        s = random_pd(np.random.default_rng(1), 3)
        inner = np.linalg.inv(np.eye(3) + np.linalg.inv(s))
        expected = np.linalg.matrix_power(inner, 4) @ s
        np.testing.assert_allclose(sigma_k(s, 2), expected, rtol=1e-10, atol=1e-12)

    def test_commutes_with_sigma(self):
        s = random_pd(np.random.default_rng(2), 4)
        sk = sigma_k(s, 3)
        assert np.max(np.abs(s @ sk - sk @ s)) <= 1e-9 * np.max(np.abs(s)) ** 2

    def test_negative_k(self):
        with pytest.raises(ValueError):
            sigma_k(np.eye(2), -1)


class TestRReg:
    def test_full_observation_small_lambda(self):
        s = random_pd(np.random.default_rng(3), 3)
        cfg = RegressionModelConfig(s, [1.0, -0.5, 2.0], np.eye(3))
        assert r_reg(s, cfg, 1e-12) < 1e-9

    def test_orthogonal_range_gives_max(self):
        # S^1/2 M spans e1 while Sigma^1/2 beta* lies along e2
        sigma = np.diag([1.0, 3.0])
        cfg = RegressionModelConfig(sigma, [0.0, 1.0], selector(2, [0]))
        assert r_reg(np.diag([2.0, 5.0]), cfg, 0.1) == pytest.approx(cfg.beta_norm_sigma_sq(), rel=1e-12)

    def test_scaling_invariance_small_lambda(self):
        rng = np.random.default_rng(4)
        cfg = d2_regression_config()
        for _ in range(20):
            s = random_pd(rng, 2, 0.5, 2.0)
            base = r_reg(s, cfg, 1e-12)
            for a in (0.1, 10.0):
                assert abs(r_reg(a * s, cfg, 1e-12) - base) <= 1e-6

    def test_bounds(self):
        rng = np.random.default_rng(5)
        cfg = d2_regression_config()
        top = cfg.beta_norm_sigma_sq()
        for _ in range(200):
            g = rng.standard_normal((2, 2))
            value = r_reg(g @ g.T + 0.01 * np.eye(2), cfg, 0.1)
            assert 0.0 <= value <= top + 1e-10

    def test_ill_conditioned_warns(self):
        cfg = RegressionModelConfig(np.eye(2), [1.0, 0.0], selector(2, [0]))
        with pytest.warns(RuntimeWarning):
            r_reg(np.diag([1e-14, 1.0]), cfg, 1e-12)


class TestAssumption:
    def test_d2_example_holds(self):
        check = check_assumption_reg(d2_regression_config(), 0.1)
        assert check.holds
        assert check.risk_raw == pytest.approx(0.40877914951989, rel=1e-12)

    def test_isotropic_does_not_hold(self):
        cfg = RegressionModelConfig(np.eye(2), [1.0, 1.0], selector(2, [0]))
        check = check_assumption_reg(cfg, 1e-12)
        assert not check.holds
        assert check.risk_raw == pytest.approx(check.risk_smoothed, abs=1e-9)

    def test_small_direction_alignment(self):
        # beta* on the small eigenvector: record what happens
        cfg = d2_regression_config(2.0, 0.5, 1.0)
        u2 = np.array([-1.0, 1.0]) / math.sqrt(2)
        aligned = RegressionModelConfig(cfg.covariance_sigma, u2, cfg.projection_m)
        check = check_assumption_reg(aligned, 0.1)
        assert not check.holds


class TestRegCurve:
    def test_k0_value(self):
        assert reg_curve_closed_form(2.0, 0.5, 1.0, 0.1, [0])[0] == pytest.approx(2 * 1.49 / 7.29, rel=1e-13)

    def test_large_k_limit(self):
        assert reg_curve_closed_form(2.0, 0.5, 1.5, 0.1, [400])[0] == pytest.approx(2.0 * 1.5**2, rel=1e-6)

    def test_dual_path_agreement(self):
        cfg = d2_regression_config(3.0, 0.3, 0.7)
        closed = reg_risk_curve(cfg, 0.05, 10)
        general = reg_risk_curve_general(cfg, 0.05, range(11))
        np.testing.assert_allclose(closed, general, rtol=1e-10)

    def test_interior_minimum(self):
        curve = reg_risk_curve(d2_regression_config(), 0.1, 10)
        assert int(np.argmin(curve)) == 1

    def test_family_mismatch(self):
        with pytest.raises(ConfigMismatch):
            reg_risk_curve(RegressionModelConfig(np.eye(3), np.ones(3), selector(3, [0])), 0.1, 3)
        with pytest.raises(ConfigMismatch):
            reg_risk_curve(RegressionModelConfig(np.diag([2.0, 0.5]), [1.0, 0.0], selector(2, [0])), 0.1, 3)


class TestClassificationCurve:
    def test_zero_nu(self):
        np.testing.assert_allclose(r_cl(np.array([0.1, 1.0, 5.0]), 0.0, 0.3), 1.0)

    def test_large_nu(self):
        assert r_cl(1.0, 1e6, 0.1) < 1e-11

    def test_quarter_beats_one(self):
        rng = np.random.default_rng(6)
        for nu, lam in zip(rng.uniform(0.01, 10, 50), rng.uniform(0.001, 5, 50)):
            assert r_cl(0.25, nu, lam) < r_cl(1.0, nu, lam)

    def test_curve_k0_and_monotone(self):
        curve = cls_risk_curve(2.0, 4.0, 0.1, 0.0, 8)
        assert curve[0] == r_cl(1.0, 2.0, 0.1)
        assert np.all(np.diff(curve) < 0)

    def test_error_sums(self):
        sums = cls_error_sums(4.0, 3)
        assert sums[0] == 0.0
        assert sums[1] == pytest.approx(math.exp(-16 / 4))
        assert sums[2] == pytest.approx(math.exp(-4) + math.exp(-16 / 2.5))

    def test_fitted_constant_gives_interior_minimum(self):
        nu, mu, lam = 1.0, 4.0, 0.1
        truth = cls_risk_curve(nu, mu, lam, 5.0, 8)
        c = fit_error_constant(truth, nu, mu, lam)
        assert c == pytest.approx(5.0, rel=1e-10)
        curve = cls_risk_curve(nu, mu, lam, c, 8)
        k = int(np.argmin(curve))
        assert 1 <= k < 8

    def test_fit_clamps_at_zero(self):
        base = cls_risk_curve(1.0, 4.0, 0.1, 0.0, 4)
        assert fit_error_constant(base - 0.1, 1.0, 4.0, 0.1) == 0.0

    def test_theory_config(self):
        with pytest.raises(ValueError):
            TheoryCurveConfig(0.1, k_max=0)
        with pytest.raises(ValueError):
            TheoryCurveConfig(0.1, error_constant_c=-1.0)


class TestPhiMaps:
    def test_reg_origin(self):
        np.testing.assert_array_equal(phi_reg(np.zeros(2), np.diag([2.0, 0.5]), 0.1), 0.0)

    def test_reg_large_eps(self):
        assert np.linalg.norm(phi_reg(np.ones(2), np.eye(2), 1e300)) < 1e-290

    def test_reg_identity_sigma(self):
        x = np.array([0.7, -1.3])
        phi = RegressionPhi(np.eye(2), 0.0)
        np.testing.assert_allclose(phi(x), x / 2, rtol=1e-15)
        assert phi.degree(x) == pytest.approx(0.5 * math.exp(-(x @ x) / 4), rel=1e-14)

    def test_reg_batch_matches_rows(self):
        rng = np.random.default_rng(7)
        xs = rng.standard_normal((5, 2))
        phi = RegressionPhi(random_pd(rng, 2), 0.1)
        np.testing.assert_allclose(phi(xs), np.array([phi(x) for x in xs]), rtol=1e-14)

    def test_reg_far_point_no_underflow_nan(self):
        out = phi_reg(np.array([60.0, 0.0]), np.eye(2), 0.1)
        assert np.all(np.isfinite(out))

    def test_cl_origin(self):
        np.testing.assert_allclose(phi_cl(np.zeros(2), np.array([1.0, 2.0]), 0.1), 0.0, atol=1e-16)

    def test_cl_at_mu(self):
        mu = np.array([1.5, -0.5])
        expected = mu / (1 + math.exp(-(mu @ mu)))
        np.testing.assert_allclose(phi_cl(mu, mu, 0.0), expected, rtol=1e-14)

    def test_cl_well_separated(self):
        mu = 6 / math.sqrt(2) * np.ones(2)
        rng = np.random.default_rng(8)
        for x in mu + 0.3 * rng.standard_normal((20, 2)):
            assert np.linalg.norm(phi_cl(x, mu, 0.0) - (x + mu) / 2) <= 1e-6

    def test_cl_antisymmetric(self):
        mu = np.array([1.0, 2.0])
        x = np.random.default_rng(9).standard_normal((10, 2))
        np.testing.assert_allclose(phi_cl(-x, mu, 0.1), -phi_cl(x, mu, 0.1), rtol=1e-14, atol=1e-16)

    def test_cl_extreme_distance_finite(self):
        assert np.all(np.isfinite(phi_cl(np.array([200.0, 0.0]), np.array([1.0, 0.0]), 0.0)))


class TestGaussianKernelMoments:
    def test_standard_case(self):
        x = np.array([0.4, -1.0, 0.3])
        d, l = gaussian_kernel_moments(x, np.zeros(3), np.eye(3), np.eye(3))
        d_expected = 2 ** (-1.5) * math.exp(-(x @ x) / 4)
        assert d == pytest.approx(d_expected, rel=1e-14)
        np.testing.assert_allclose(l, d_expected * x / 2, rtol=1e-14)

    def test_at_mean(self):
        rng = np.random.default_rng(10)
        s, w = random_pd(rng, 3), random_pd(rng, 3)
        mu = rng.standard_normal(3)
        d, _ = gaussian_kernel_moments(mu, mu, s, w)
        expected = math.sqrt(np.linalg.det(w) / np.linalg.det(w + s))
        assert d == pytest.approx(expected, rel=1e-12)

    def test_recovers_regression_degree(self):
        x = np.array([0.5, -0.2])
        sigma = np.diag([2.0, 0.5])
        d, _ = gaussian_kernel_moments(x, np.zeros(2), sigma)
        assert d == pytest.approx(RegressionPhi(sigma, 0.0).degree(x), rel=1e-13)

    def test_matches_literal_formula(self):
        rng = np.random.default_rng(11)
        s, w = random_pd(rng, 3), random_pd(rng, 3)
        x, mu = rng.standard_normal(3), rng.standard_normal(3)
        d, l = gaussian_kernel_moments(x, mu, s, w)
        wi, si = np.linalg.inv(w), np.linalg.inv(s)
        np.testing.assert_allclose(l, d * np.linalg.inv(wi + si) @ (wi @ x + si @ mu), rtol=1e-12)

    def test_monte_carlo(self):
        rng = np.random.default_rng(12)
        for seed in range(3):
            s, w = random_pd(rng, 3, 0.5, 1.5), random_pd(rng, 3, 0.5, 1.5)
            mu = rng.uniform(0.5, 1.5, 3)
            x = mu + rng.uniform(-0.5, 0.5, 3)
            d, l = gaussian_kernel_moments(x, mu, s, w)
            d_mc, l_mc = moment_monte_carlo(x, mu, s, w, 400_000, seed)
            assert abs(d_mc - d) / d < 0.01
            np.testing.assert_allclose(l_mc, l, rtol=0.02)


def test_no_warnings_on_default_curve():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reg_risk_curve(d2_regression_config(), 0.1, 10)
