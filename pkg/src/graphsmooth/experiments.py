"""Samplers for the two latent models, Monte-Carlo trial runner, smoothing-map
concentration diagnostics, and CSV / manifest emission."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._linalg import sym_sqrt
from .errors import ConfigMismatch, DegenerateDegree
from .graph import build_adjacency, row_normalize
from .learn import k_sweep
from .model import (
    ClassificationModelConfig,
    KernelConfig,
    LatentDataset,
    RegressionModelConfig,
    RiskCurve,
    has_interior_minimum,
)
from .theory import (
    RegressionPhi,
    cls_risk_curve,
    d2_family_parameters,
    fit_error_constant,
    phi_cl,
    reg_risk_curve,
    reg_risk_curve_general,
)

log = logging.getLogger(__name__)

# Desk-scale defaults; the source figures do not state n or lambda.
DEFAULT_N = 2000
DEFAULT_N_TRAIN = 1000
DEFAULT_TRIALS = 20
DEFAULT_LAM = 0.1
DEFAULT_KMAX_REG = 10
DEFAULT_KMAX_CLS = 8
DEFAULT_EPS_CURVES = 0.0
DEFAULT_EPS_DIAGNOSTIC = 0.1
DEFAULT_MU_NORM = 4.0
DEFAULT_N_LIST = (250, 500, 1000, 2000, 4000)


# --------------------------------------------------------------------------
# Samplers


def _regression_latents(config: RegressionModelConfig, n, rng):
    return rng.standard_normal((n, config.dim_d)) @ sym_sqrt(config.covariance_sigma)


def _classification_latents(config: ClassificationModelConfig, n, rng):
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    x = y[:, None] * config.mu + rng.standard_normal((n, config.dim_d))
    return x, y


def sample_regression(config: RegressionModelConfig, n, n_train, seed) -> LatentDataset:
    if not 0 < n_train < n:
        raise ValueError(f"need 0 < n_train < n, got n_train={n_train}, n={n}")
    rng = np.random.default_rng(seed)
    x = _regression_latents(config, n, rng)
    return LatentDataset.from_latents(x, config.projection_m, x @ config.beta_star, n_train, seed)


def sample_classification(config: ClassificationModelConfig, n, n_train, seed) -> LatentDataset:
    if not 0 < n_train < n:
        raise ValueError(f"need 0 < n_train < n, got n_train={n_train}, n={n}")
    rng = np.random.default_rng(seed)
    x, y = _classification_latents(config, n, rng)
    return LatentDataset.from_latents(x, config.projection_m, y, n_train, seed)


def sample(config, n, n_train, seed) -> LatentDataset:
    if isinstance(config, RegressionModelConfig):
        return sample_regression(config, n, n_train, seed)
    if isinstance(config, ClassificationModelConfig):
        return sample_classification(config, n, n_train, seed)
    raise TypeError(f"unsupported config {type(config).__name__}")


# --------------------------------------------------------------------------
# Trials


def theory_curve(config, lam, ks, error_constant_c=0.0):
    """Theoretical risk at each k, or None for configs without a supported formula."""
    ks = np.asarray(ks, dtype=int)
    if isinstance(config, RegressionModelConfig):
        try:
            d2_family_parameters(config)
        except ConfigMismatch:
            return reg_risk_curve_general(config, lam, ks)
        return reg_risk_curve(config, lam, int(ks.max()))[ks]
    if isinstance(config, ClassificationModelConfig):
        nu = float(np.linalg.norm(config.nu))
        mu = float(np.linalg.norm(config.mu))
        return cls_risk_curve(nu, mu, lam, error_constant_c, int(ks.max()))[ks]
    return None


def run_trial(dataset: LatentDataset, kernel: KernelConfig, lam, ks, config=None, error_constant_c=0.0) -> RiskCurve:
    op = row_normalize(build_adjacency(dataset.latents_x, kernel))
    curve = k_sweep(dataset, op, lam, ks)
    if config is None:
        return curve
    return RiskCurve(
        curve.ks,
        curve.empirical_mean,
        curve.empirical_std,
        theory=theory_curve(config, lam, curve.ks, error_constant_c),
        oversmoothing_level=curve.oversmoothing_level,
    )


def _trial_job(args):
    config, kernel, lam, ks, n, n_train, seed = args
    try:
        curve = run_trial(sample(config, n, n_train, seed), kernel, lam, ks)
    except DegenerateDegree as exc:
        return seed, None, str(exc)
    return seed, (curve.empirical_mean, curve.oversmoothing_level), None


def monte_carlo(config, kernel, lam, ks, n, n_train, n_trials, base_seed, jobs=1) -> RiskCurve:
    """Aggregate independent trials with seeds base_seed .. base_seed + n_trials - 1.

    Results are folded in seed order regardless of worker completion order.
    For classification the error-term constant is fitted on k in {0, 1, 2}
    of the trial means and stored in ``info["error_constant_c"]``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    seeds = [base_seed + t for t in range(n_trials)]
    jobs_args = [(config, kernel, lam, list(ks), n, n_train, s) for s in seeds]
    if jobs > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, n_trials)) as pool:
            results = list(pool.map(_trial_job, jobs_args))
    else:
        results = [_trial_job(a) for a in jobs_args]
    results.sort(key=lambda r: r[0])

    failed = tuple(seed for seed, res, _ in results if res is None)
    for seed, res, msg in results:
        if res is None:
            log.warning("trial seed=%d failed: %s", seed, msg)
    ok = [res for _, res, _ in results if res is not None]
    if not ok:
        raise DegenerateDegree(f"all {n_trials} trials failed")
    risks = np.array([r[0] for r in ok])
    levels = np.array([r[1] for r in ok])
    mean = risks.mean(axis=0)
    std = risks.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros_like(mean)
    interior = float(np.mean([has_interior_minimum(r) for r in risks]))

    info = {}
    c = 0.0
    if isinstance(config, ClassificationModelConfig):
        ks_arr = np.asarray(ks)
        if ks_arr.size >= 3 and list(ks_arr[:3]) == [0, 1, 2]:
            c = fit_error_constant(
                mean, float(np.linalg.norm(config.nu)), float(np.linalg.norm(config.mu)), lam
            )
        info["error_constant_c"] = c
    return RiskCurve(
        ks,
        mean,
        std,
        theory=theory_curve(config, lam, ks, c),
        oversmoothing_level=float(levels.mean()),
        n_trials=len(ok),
        interior_fraction=interior,
        failed_seeds=failed,
        trial_risks=risks,
        info=info,
    )


# --------------------------------------------------------------------------
# Smoothing-map concentration


@dataclass(frozen=True)
class PhiDiagnostic:
    n_list: tuple
    sup_first_moment: np.ndarray
    sup_second_moment: np.ndarray
    slope_first: float
    slope_second: float


def rank2_spectral_norm(a, b):
    """Row-wise spectral norm of a a^T - b b^T (closed form for a rank-2 symmetric matrix)."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    half_trace = 0.5 * (aa - bb)
    disc = np.sqrt(np.maximum(half_trace**2 + aa * bb - ab**2, 0.0))
    return np.abs(half_trace) + disc


def loglog_slope(ns, values) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def phi_discrepancy(task, config, kernel: KernelConfig, n, rng):
    """Sup over nodes of the first- and second-moment gaps between L X and phi(X)."""
    if task == "regression":
        x = _regression_latents(config, n, rng)
        phi = RegressionPhi(config.covariance_sigma, kernel.epsilon)(x)
        whiten = sym_sqrt(np.linalg.inv(config.covariance_sigma))
    elif task == "classification":
        x, _ = _classification_latents(config, n, rng)
        phi = phi_cl(x, config.mu, kernel.epsilon)
        whiten = np.eye(config.dim_d)
    else:
        raise ValueError(f"unknown task {task!r}")
    x1 = row_normalize(build_adjacency(x, kernel)).l_matrix @ x
    a, b = x1 @ whiten, phi @ whiten
    first = float(np.max(np.linalg.norm(a - b, axis=1)))
    second = float(np.max(rank2_spectral_norm(a, b)))
    return first, second


def phi_diagnostic(task, config, kernel: KernelConfig, n_list=DEFAULT_N_LIST, seed=0, n_reps=5) -> PhiDiagnostic:
    """Sup-discrepancy between one smoothing step and its deterministic limit map, per n.

    Each entry averages ``n_reps`` independent draws (seeded by (seed, n, rep))
    before the log-log slope against n is fitted.
    """
    if not kernel.epsilon > 0:
        raise DegenerateDegree("the concentration diagnostic needs epsilon > 0")
    n_list = tuple(int(n) for n in n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    firsts, seconds = [], []
    for n in n_list:
        reps = [phi_discrepancy(task, config, kernel, n, np.random.default_rng([seed, n, r])) for r in range(n_reps)]
        firsts.append(np.mean([r[0] for r in reps]))
        seconds.append(np.mean([r[1] for r in reps]))
    firsts, seconds = np.array(firsts), np.array(seconds)
    return PhiDiagnostic(n_list, firsts, seconds, loglog_slope(n_list, firsts), loglog_slope(n_list, seconds))


# --------------------------------------------------------------------------
# Output


RISK_HEADER = ("k", "emp_mean", "emp_std", "theory", "n_trials")
DIAGNOSTIC_HEADER = ("n", "sup_first_moment", "sup_second_moment")


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_table(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def emit_results(result, path) -> Path:
    """Write a RiskCurve or PhiDiagnostic as CSV (header, 17 significant digits)."""
    if isinstance(result, RiskCurve):
        theory = result.theory if result.theory is not None else [math.nan] * len(result.ks)
        rows = [
            (int(k), m, s, t, int(result.n_trials))
            for k, m, s, t in zip(result.ks, result.empirical_mean, result.empirical_std, theory)
        ]
        return write_table(path, RISK_HEADER, rows)
    if isinstance(result, PhiDiagnostic):
        rows = list(zip(result.n_list, result.sup_first_moment, result.sup_second_moment))
        return write_table(path, DIAGNOSTIC_HEADER, rows)
    raise TypeError(f"cannot emit {type(result).__name__}")


def read_table(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[float(v) for v in row] for row in reader]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command, params, outputs, version) -> Path:
    """JSON manifest with every parameter needed to rerun ``command`` and output digests."""
    out_dir = Path(out_dir)
    manifest = {
        "artifact": "graphsmooth",
        "version": version,
        "command": command,
        "params": params,
        "outputs": {Path(p).name: file_digest(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# Gaussian-moment quadrature check


def random_spd(rng, d, low=0.5, high=1.5):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(low, high, d)) @ q.T


def random_moment_instance(rng, d=3):
    """(x, mu, Sigma, Sigma_W) with well-conditioned covariances and moments away from zero."""
    mu = rng.uniform(0.5, 1.5, d)
    x = mu + rng.uniform(-0.5, 0.5, d)
    return x, mu, random_spd(rng, d), random_spd(rng, d)


def monte_carlo_moments(x, mu, sigma, sigma_w, n_samples, rng, chunk=250_000):
    """Sample estimates of E[W(x, Y)] and E[W(x, Y) Y] for Y ~ N(mu, Sigma)."""
    chol = np.linalg.cholesky(sigma)
    prec_w = np.linalg.inv(sigma_w)
    total_w, total_wy, done = 0.0, np.zeros_like(mu), 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        y = mu + rng.standard_normal((m, mu.size)) @ chol.T
        diff = y - x
        w = np.exp(-0.5 * np.einsum("ij,jk,ik->i", diff, prec_w, diff))
        total_w += w.sum()
        total_wy += w @ y
        done += m
    return total_w / n_samples, total_wy / n_samples


def kernel_moment_check(n_instances=20, n_samples=1_000_000, seed=0, d=3):
    """Rows (instance, quantity, closed_form, monte_carlo, rel_err) over random instances."""
    from .theory import gaussian_kernel_moments

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_instances):
        x, mu, sigma, sigma_w = random_moment_instance(rng, d)
        d_x, l_x = gaussian_kernel_moments(x, mu, sigma, sigma_w)
        d_mc, l_mc = monte_carlo_moments(x, mu, sigma, sigma_w, n_samples, rng)
        for name, exact, est in [("d", d_x, d_mc)] + [(f"L{j}", l_x[j], l_mc[j]) for j in range(d)]:
            rows.append((i, name, float(exact), float(est), abs(est - exact) / max(abs(exact), 1e-6)))
    return rows
