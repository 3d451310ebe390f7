"""Domain types shared by the graph, learning, theory and experiment modules.

Matrices are stored as read-only float arrays so instances can be shared
across worker processes without copying concerns.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SYM_TOL = 1e-10
ORTHO_TOL = 1e-10


def _frozen(a, ndim=None):
    arr = np.array(a, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RegressionModelConfig:
    """Gaussian latent regression model: x ~ N(0, sigma), y = x . beta_star, z = M^T x."""

    covariance_sigma: np.ndarray
    beta_star: np.ndarray
    projection_m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "covariance_sigma", _frozen(self.covariance_sigma))
        object.__setattr__(self, "beta_star", _frozen(self.beta_star).ravel())
        object.__setattr__(self, "projection_m", _frozen(self.projection_m, ndim=2))

    @property
    def dim_d(self) -> int:
        return self.projection_m.shape[0]

    @property
    def dim_p(self) -> int:
        return self.projection_m.shape[1]

    def beta_norm_sigma_sq(self) -> float:
        """||beta*||^2_Sigma, the label variance."""
        return float(self.beta_star @ self.covariance_sigma @ self.beta_star)


@dataclass(frozen=True)
class ClassificationModelConfig:
    """Balanced two-Gaussian mixture: y = +-1 with x ~ N(y mu, I), z = M^T x."""

    mu: np.ndarray
    projection_m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu).ravel())
        object.__setattr__(self, "projection_m", _frozen(self.projection_m, ndim=2))

    @property
    def dim_d(self) -> int:
        return self.projection_m.shape[0]

    @property
    def dim_p(self) -> int:
        return self.projection_m.shape[1]

    @property
    def nu(self) -> np.ndarray:
        return self.projection_m.T @ self.mu


@dataclass(frozen=True)
class KernelConfig:
    """Kernel W(x, y) = epsilon + exp(-||x - y||^2 / 2).

    ``kernel_covariance`` is only consumed by the Gaussian-moment oracle in
    :mod:`graphsmooth.theory`; the adjacency builder always uses the identity.
    """

    epsilon: float = 0.0
    kernel_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if self.kernel_covariance is not None:
            object.__setattr__(self, "kernel_covariance", _frozen(self.kernel_covariance))


@dataclass(frozen=True)
class LatentDataset:
    latents_x: np.ndarray
    features_z: np.ndarray
    labels_y: np.ndarray
    n_train: int
    n_test: int
    rng_seed: int

    def __post_init__(self):
        for name in ("latents_x", "features_z", "labels_y"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.labels_y.shape[0]
        if self.latents_x.shape[0] != n or self.features_z.shape[0] != n:
            raise ValueError("latents, features and labels disagree on n")
        if self.n_train <= 0 or self.n_test <= 0 or self.n_train + self.n_test != n:
            raise ValueError(f"invalid split n_train={self.n_train}, n_test={self.n_test}, n={n}")

    @classmethod
    def from_latents(cls, latents_x, projection_m, labels_y, n_train, rng_seed):
        x = np.asarray(latents_x, dtype=float)
        z = x @ np.asarray(projection_m, dtype=float).reshape(x.shape[1], -1)
        n = x.shape[0]
        return cls(x, z, labels_y, int(n_train), int(n - n_train), int(rng_seed))

    @property
    def n(self) -> int:
        return self.labels_y.shape[0]

    def train_slice(self):
        return slice(0, self.n_train)

    def test_slice(self):
        return slice(self.n_train, self.n)


@dataclass(frozen=True)
class RidgeModel:
    lam: float
    beta_hat: np.ndarray
    smoothing_order: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"ridge lambda must be positive, got {self.lam}")
        object.__setattr__(self, "beta_hat", _frozen(self.beta_hat))
        if not np.all(np.isfinite(self.beta_hat)):
            raise ValueError("non-finite ridge coefficients")

    def predict(self, features):
        return np.asarray(features) @ self.beta_hat


def smallest_argmin(values) -> int:
    """Index of the minimum, ties broken towards the smallest index."""
    values = np.asarray(values, dtype=float)
    return int(np.flatnonzero(values == values.min())[0])


def has_interior_minimum(risks) -> bool:
    """True when the smallest minimizer k* >= 1 beats both endpoints strictly."""
    risks = np.asarray(risks, dtype=float)
    k = smallest_argmin(risks)
    return k >= 1 and risks[k] < min(risks[0], risks[-1])


@dataclass(frozen=True)
class RiskCurve:
    """Per-k test risk statistics, optionally paired with a theoretical curve."""

    ks: np.ndarray
    empirical_mean: np.ndarray
    empirical_std: np.ndarray
    theory: Optional[np.ndarray] = None
    oversmoothing_level: float = math.nan
    n_trials: int = 1
    interior_fraction: float = math.nan
    failed_seeds: tuple = ()
    trial_risks: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)
    k_star_empirical: int = field(init=False)

    def __post_init__(self):
        ks = np.array(self.ks, dtype=int)
        mean = _frozen(self.empirical_mean)
        std = _frozen(self.empirical_std)
        ks.setflags(write=False)
        if ks.size and np.any(np.diff(ks) <= 0):
            raise ValueError("ks must be strictly increasing")
        if mean.shape != ks.shape or std.shape != ks.shape:
            raise ValueError("risk arrays must match ks")
        if np.any(mean < 0):
            raise ValueError("risks must be non-negative")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "empirical_mean", mean)
        object.__setattr__(self, "empirical_std", std)
        if self.theory is not None:
            theory = _frozen(self.theory)
            if theory.shape != ks.shape:
                raise ValueError("theory must match ks")
            object.__setattr__(self, "theory", theory)
        if self.trial_risks is not None:
            object.__setattr__(self, "trial_risks", _frozen(self.trial_risks))
        k_star = int(ks[smallest_argmin(mean)]) if ks.size else -1
        object.__setattr__(self, "k_star_empirical", k_star)

    @property
    def standard_error(self) -> np.ndarray:
        return self.empirical_std / math.sqrt(max(self.n_trials, 1))

    def risk_at(self, k: int) -> float:
        idx = np.flatnonzero(self.ks == k)
        if idx.size == 0:
            raise KeyError(k)
        return float(self.empirical_mean[idx[0]])


# --------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add(self, message, value):
        self.failures.append((message, value))

    def __str__(self):
        if self.ok:
            return "pass"
        return "; ".join(f"{msg} ({val})" for msg, val in self.failures)


def _check_projection(report, m, d):
    if m.ndim != 2 or m.shape[0] != d:
        report.add("M has wrong shape", m.shape)
        return
    if m.shape[1] > d:
        report.add("p > d", m.shape)
    gram_err = float(np.linalg.norm(m.T @ m - np.eye(m.shape[1]), 2))
    if gram_err > ORTHO_TOL:
        report.add("M^T M != I", gram_err)


def _check_pd(report, s, name):
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        report.add(f"{name} not square", s.shape)
        return
    asym = float(np.max(np.abs(s - s.T), initial=0.0))
    if asym > SYM_TOL:
        report.add(f"{name} not symmetric", asym)
        return
    w_min = float(np.linalg.eigvalsh(s).min())
    if w_min <= 0:
        report.add(f"{name} not PD", w_min)


def validate_config(config) -> ValidationReport:
    """Check a model or kernel configuration without raising."""
    report = ValidationReport()
    if isinstance(config, RegressionModelConfig):
        d = config.covariance_sigma.shape[0]
        _check_pd(report, config.covariance_sigma, "covariance")
        if config.beta_star.shape != (d,):
            report.add("beta_star has wrong length", config.beta_star.shape)
        _check_projection(report, config.projection_m, d)
    elif isinstance(config, ClassificationModelConfig):
        _check_projection(report, config.projection_m, config.mu.shape[0])
    elif isinstance(config, KernelConfig):
        if not config.epsilon >= 0:
            report.add("epsilon negative", config.epsilon)
        if config.kernel_covariance is not None:
            _check_pd(report, config.kernel_covariance, "kernel covariance")
    else:
        report.add("unsupported config type", type(config).__name__)
    return report


def ensure_valid(config):
    report = validate_config(config)
    if not report.ok:
        raise ValueError(f"invalid {type(config).__name__}: {report}")
    return config


# --------------------------------------------------------------------------
# Named constructors


def rotation_basis(degrees: float) -> np.ndarray:
    """2x2 orthonormal basis whose first column is at ``degrees`` from e1."""
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def selector(d: int, columns: Sequence[int]) -> np.ndarray:
    """d x p matrix whose columns are the canonical vectors e_i."""
    m = np.zeros((d, len(columns)))
    for j, i in enumerate(columns):
        m[i, j] = 1.0
    return m


def d2_regression_config(l1=2.0, l2=0.5, b=1.0) -> RegressionModelConfig:
    """The two-dimensional example: eigenvectors [1,1]/sqrt2 and [-1,1]/sqrt2,
    beta* = b u1, features observe the first coordinate."""
    u = rotation_basis(45.0)
    sigma = (u * np.array([l1, l2])) @ u.T
    return RegressionModelConfig(sigma, b * u[:, 0], selector(2, [0]))


def d2_classification_config(mu_norm=4.0) -> ClassificationModelConfig:
    mu = (mu_norm / math.sqrt(2.0)) * np.ones(2)
    return ClassificationModelConfig(mu, selector(2, [0]))


_NAMED = re.compile(r"^\s*(\w+)\s*:(.*)$")


def parse_matrix(text: str) -> np.ndarray:
    """Parse a matrix from a config value.

    Accepted forms: a row-major nested list ``[[1, 0], [0, 1]]``, ``eye:3``,
    ``select:2:[0]`` and ``eigs:[2,0.5];vecs:rot45`` (``vecs`` may also be
    ``identity`` or a nested list of eigenvector columns).
    """
    text = text.strip()
    if text.startswith("["):
        return np.array(ast.literal_eval(text), dtype=float)
    parts = {}
    for chunk in text.split(";"):
        m = _NAMED.match(chunk)
        if m is None:
            raise ValueError(f"cannot parse matrix spec {text!r}")
        parts[m.group(1).lower()] = m.group(2).strip()
    if "eye" in parts:
        return np.eye(int(parts["eye"]))
    if "select" in parts:
        d, cols = parts["select"].split(":", 1)
        return selector(int(d), ast.literal_eval(cols))
    if "eigs" in parts:
        eigs = np.array(ast.literal_eval(parts["eigs"]), dtype=float)
        vecs = parts.get("vecs", "identity")
        if vecs == "identity":
            u = np.eye(eigs.size)
        elif vecs.startswith("rot"):
            u = rotation_basis(float(vecs[3:]))
        else:
            u = np.array(ast.literal_eval(vecs), dtype=float)
        if u.shape != (eigs.size, eigs.size):
            raise ValueError(f"eigenvector basis shape {u.shape} does not match {eigs.size} eigenvalues")
        return (u * eigs) @ u.T
    raise ValueError(f"cannot parse matrix spec {text!r}")


def parse_vector(text: str) -> np.ndarray:
    return np.array(ast.literal_eval(text.strip()), dtype=float).ravel()
