"""Closed-form risk functionals, smoothed covariances, and one-step smoothing maps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from ._linalg import sym_fun, sym_sqrt
from .errors import ConfigMismatch, SolveFailure
from .model import RegressionModelConfig, rotation_basis

COND_WARN = 1e-10
CURVE_RTOL = 1e-10


@dataclass(frozen=True)
class TheoryCurveConfig:
    lam: float
    error_constant_c: float = 0.0
    k_max: int = 8

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.error_constant_c < 0:
            raise ValueError("error constant must be non-negative")


# --------------------------------------------------------------------------
# Regression


def shrink_eigenvalues(eigs, k):
    """lambda -> (1 + 1/lambda)^(-2k) lambda, written as lambda (lambda / (1 + lambda))^(2k)."""
    eigs = np.asarray(eigs, dtype=float)
    return eigs * (eigs / (1.0 + eigs)) ** (2 * k)


def sigma_k(sigma, k: int):
    """Covariance of the k-times smoothed latents, (I + Sigma^-1)^(-2k) Sigma."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return np.array(sigma, dtype=float)
    return sym_fun(sigma, lambda w: shrink_eigenvalues(w, k))


def r_reg(s_matrix, config: RegressionModelConfig, lam: float) -> float:
    """Limiting ridge risk when the latent covariance seen by the learner is S.

    Evaluates || (I - S^1/2 M (lam I + M^T S M)^-1 M^T S^1/2) Sigma^1/2 beta* ||^2.
    """
    m = config.projection_m
    v = sym_sqrt(config.covariance_sigma) @ config.beta_star
    b = sym_sqrt(s_matrix) @ m
    gram = b.T @ b
    gram[np.diag_indices_from(gram)] += lam
    w_min = float(np.linalg.eigvalsh(gram).min())
    if w_min < COND_WARN:
        warnings.warn(f"lam I + M^T S M is ill-conditioned (min eigenvalue {w_min:.3e})", RuntimeWarning, stacklevel=2)
    resid = v - b @ linalg.solve(gram, b.T @ v, assume_a="sym")
    return float(resid @ resid)


class AssumptionCheck(NamedTuple):
    holds: bool
    risk_raw: float
    risk_smoothed: float


def check_assumption_reg(config: RegressionModelConfig, lam: float) -> AssumptionCheck:
    """Compare r_reg(Sigma) with r_reg((I + Sigma)^-2 Sigma^3), i.e. one smoothing step."""
    raw = r_reg(config.covariance_sigma, config, lam)
    smoothed = r_reg(sigma_k(config.covariance_sigma, 1), config, lam)
    return AssumptionCheck(raw > smoothed, raw, smoothed)


def reg_risk_curve_general(config: RegressionModelConfig, lam: float, ks) -> np.ndarray:
    """r_reg(Sigma^(k)) for each k; extrapolated, no guarantee outside the d=2 family."""
    return np.array([r_reg(sigma_k(config.covariance_sigma, k), config, lam) for k in ks])


def d2_family_parameters(config: RegressionModelConfig, tol: float = 1e-9):
    """Return (l1, l2, b) if ``config`` is the rotated two-dimensional example, else raise."""
    sigma, m, beta = config.covariance_sigma, config.projection_m, config.beta_star
    if sigma.shape != (2, 2) or m.shape != (2, 1):
        raise ConfigMismatch("the closed-form curve needs d = 2 and p = 1")
    if not np.allclose(m[:, 0], [1.0, 0.0], atol=tol):
        raise ConfigMismatch("the closed-form curve needs M^T = [1, 0]")
    u = rotation_basis(45.0)
    u1, u2 = u[:, 0], u[:, 1]
    l1, l2 = float(u1 @ sigma @ u1), float(u2 @ sigma @ u2)
    if abs(u1 @ sigma @ u2) > tol * max(1.0, abs(l1)):
        raise ConfigMismatch("Sigma must have eigenvectors [1,1]/sqrt2 and [-1,1]/sqrt2")
    if abs(beta @ u2) > tol * max(1.0, np.linalg.norm(beta)):
        raise ConfigMismatch("beta* must be aligned with [1,1]/sqrt2")
    return l1, l2, float(beta @ u1)


def reg_curve_closed_form(l1, l2, b, lam, ks) -> np.ndarray:
    ks = np.asarray(ks)
    a1 = shrink_eigenvalues(l1, ks)
    a2 = shrink_eigenvalues(l2, ks)
    return l1 * b**2 * ((2 * lam + a2) ** 2 + a2 * a1) / (2 * lam + a1 + a2) ** 2


def reg_risk_curve(config: RegressionModelConfig, lam: float, k_max: int) -> np.ndarray:
    """Closed-form approximate risk for k = 0..k_max in the d = 2 family.

    Cross-checked against r_reg(sigma_k(Sigma, k)); a disagreement beyond
    1e-10 relative raises.
    """
    l1, l2, b = d2_family_parameters(config)
    ks = np.arange(k_max + 1)
    closed = reg_curve_closed_form(l1, l2, b, lam, ks)
    general = reg_risk_curve_general(config, lam, ks)
    scale = np.maximum(np.abs(closed), np.finfo(float).tiny)
    worst = float(np.max(np.abs(closed - general) / scale))
    if worst > CURVE_RTOL:
        raise ArithmeticError(f"closed-form curve disagrees with r_reg(sigma_k) by {worst:.3e}")
    return closed


# --------------------------------------------------------------------------
# Classification


def r_cl(s, nu_norm, lam):
    """((s + lam)^2 + s |nu|^2) / (s + lam + |nu|^2)^2; broadcasts over all arguments."""
    s = np.asarray(s, dtype=float)
    nu2 = np.asarray(nu_norm, dtype=float) ** 2
    lam = np.asarray(lam, dtype=float)
    out = ((s + lam) ** 2 + s * nu2) / (s + lam + nu2) ** 2
    return float(out) if out.ndim == 0 else out


def cls_error_sums(mu_norm, k_max) -> np.ndarray:
    """sum_{l<k} exp(-|mu|^2 / (2 (1 + 4^-l))) for k = 0..k_max."""
    ells = np.arange(k_max)
    terms = np.exp(-(mu_norm**2) / (2.0 * (1.0 + 4.0 ** (-ells))))
    return np.concatenate([[0.0], np.cumsum(terms)])


def cls_risk_curve(nu_norm, mu_norm, lam, error_constant_c, k_max) -> np.ndarray:
    ks = np.arange(k_max + 1)
    return r_cl(4.0 ** (-ks), nu_norm, lam) + error_constant_c * cls_error_sums(mu_norm, k_max)


def fit_error_constant(empirical, nu_norm, mu_norm, lam, fit_ks=(0, 1, 2)) -> float:
    """Non-negative least-squares scalar c matching the curve on ``fit_ks`` only."""
    empirical = np.asarray(empirical, dtype=float)
    fit_ks = [k for k in fit_ks if k < empirical.size]
    sums = cls_error_sums(mu_norm, max(fit_ks))[fit_ks]
    base = r_cl(4.0 ** (-np.asarray(fit_ks, dtype=float)), nu_norm, lam)
    denom = float(sums @ sums)
    if denom == 0.0:
        return 0.0
    return max(0.0, float(sums @ (empirical[fit_ks] - base)) / denom)


# --------------------------------------------------------------------------
# One-step smoothing maps


def _log_eps(epsilon):
    return math.log(epsilon) if epsilon > 0 else -math.inf


class RegressionPhi:
    """phi_reg(x) = d(x) / (d(x) + eps) (Sigma^-1 + I)^-1 x, with I + Sigma factored once."""

    def __init__(self, sigma, epsilon):
        sigma = np.asarray(sigma, dtype=float)
        self.epsilon = float(epsilon)
        self._chol = linalg.cho_factor(np.eye(sigma.shape[0]) + sigma)
        self._half_logdet = float(np.sum(np.log(np.diag(self._chol[0]))))
        # (Sigma^-1 + I)^-1 = Sigma (I + Sigma)^-1, symmetric
        self.shrink = sym_fun(sigma, lambda w: w / (1.0 + w))

    def log_degree(self, x):
        x = np.atleast_2d(x)
        q = np.einsum("ij,ij->i", x, linalg.cho_solve(self._chol, x.T).T)
        return -self._half_logdet - 0.5 * q

    def degree(self, x):
        out = np.exp(self.log_degree(x))
        return out[0] if np.ndim(x) == 1 else out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ld = self.log_degree(x)
        weight = np.exp(ld - np.logaddexp(ld, _log_eps(self.epsilon)))
        out = weight[:, None] * (np.atleast_2d(x) @ self.shrink)
        return out[0] if x.ndim == 1 else out


def phi_reg(x, sigma, epsilon):
    return RegressionPhi(sigma, epsilon)(x)


def phi_cl(x, mu, epsilon):
    """(d_mu(x)(x+mu)/2 + d_-mu(x)(x-mu)/2) / (2 eps + d_mu(x) + d_-mu(x)) in log domain."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    xs = np.atleast_2d(x)
    d = mu.size
    base = -0.5 * d * math.log(2.0)
    lp = base - np.sum((xs - mu) ** 2, axis=1) / 4.0
    lm = base - np.sum((xs + mu) ** 2, axis=1) / 4.0
    log_den = np.logaddexp(np.logaddexp(lp, lm), _log_eps(2.0 * epsilon))
    wp = np.exp(lp - log_den)[:, None]
    wm = np.exp(lm - log_den)[:, None]
    out = wp * (xs + mu) / 2.0 + wm * (xs - mu) / 2.0
    return out[0] if x.ndim == 1 else out


def gaussian_kernel_moments(x, mu, sigma, sigma_w=None):
    """Integrals of W(x, y) = exp(-||x - y||^2_{Sigma_W^-1} / 2) against N(mu, Sigma).

    Returns ``(d, L)`` with d(x) = int W(x,y) N(y) dy and L(x) = int W(x,y) y N(y) dy:

        d(x) = |Sigma_W|^1/2 |Sigma_W + Sigma|^-1/2 exp(-||x - mu||^2_{(Sigma_W + Sigma)^-1} / 2)
        L(x) = d(x) (Sigma_W^-1 + Sigma^-1)^-1 (Sigma_W^-1 x + Sigma^-1 mu)

    The second factor is evaluated as Sigma T^-1 x + Sigma_W T^-1 mu with
    T = Sigma_W + Sigma, which avoids inverting either covariance.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sigma_w = np.eye(x.size) if sigma_w is None else np.asarray(sigma_w, dtype=float)
    try:
        total = linalg.cho_factor(sigma_w + sigma)
        chol_w = linalg.cholesky(sigma_w)
    except linalg.LinAlgError as exc:
        raise SolveFailure("kernel or data covariance is not positive definite") from exc
    logdet_total = 2.0 * float(np.sum(np.log(np.diag(total[0]))))
    logdet_w = 2.0 * float(np.sum(np.log(np.diag(chol_w))))
    diff = x - mu
    q = float(diff @ linalg.cho_solve(total, diff))
    d_x = math.exp(0.5 * logdet_w - 0.5 * logdet_total - 0.5 * q)
    mean = sigma @ linalg.cho_solve(total, x) + sigma_w @ linalg.cho_solve(total, mu)
    return d_x, d_x * mean
