"""Structural invariant checks runnable without pytest (``graphsmooth selftest``)."""

from __future__ import annotations

import contextlib
import io
import tempfile
import time
from pathlib import Path

import numpy as np

from .graph import build_adjacency, row_normalize, smooth
from .learn import ridge_fit
from .model import KernelConfig, d2_regression_config
from .experiments import sample_regression
from .theory import r_cl, reg_curve_closed_form, reg_risk_curve_general, shrink_eigenvalues


def _operator(n=200, eps=0.1, seed=0):
    x = np.random.default_rng(seed).standard_normal((n, 2))
    return x, row_normalize(build_adjacency(x, KernelConfig(eps)))


def check_row_stochastic():
    _, op = _operator()
    err = op.row_sum_error()
    drift = float(np.max(np.abs(smooth(op, np.ones(op.n), 1000) - 1.0)))
    return err <= 1e-10 and drift <= 1e-8, f"row-sum error {err:.2e}, drift after 1000 steps {drift:.2e}"


def check_constant_fixed_point():
    _, op = _operator()
    const = np.full((op.n, 3), [1.5, -2.0, 7.0])
    worst = max(float(np.max(np.abs(smooth(op, const, k) - const))) for k in (1, 10, 100))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def check_k0_identity():
    _, op = _operator()
    z = np.random.default_rng(1).standard_normal((op.n, 2))
    return bool(np.array_equal(smooth(op, z, 0), z)), "k=0 returns input"


def check_permutation_equivariance():
    x, _ = _operator(n=120)
    perm = np.random.default_rng(2).permutation(x.shape[0])
    kern = KernelConfig(0.1)
    a = build_adjacency(x, kern).weights
    ap = build_adjacency(x[perm], kern).weights
    ok = np.array_equal(ap, a[np.ix_(perm, perm)])
    return bool(ok), "A(Px) == P A(x) P^T"


def check_contraction():
    x, op = _operator(n=150)
    z = np.random.default_rng(3).standard_normal((op.n, 2))
    limit = np.outer(np.ones(op.n), op.stationary @ z)
    prev = np.inf
    for k in range(200):
        dist = np.linalg.norm(z - limit, 2)
        if dist < 1e-10:
            break
        if dist > prev * (1 + 1e-10):
            return False, f"distance grew at k={k}"
        prev = dist
        z = op.l_matrix @ z
    return True, f"monotone until {k} steps"


def check_ridge_optimality():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((60, 3))
    y = rng.standard_normal(60)
    lam = 0.1
    model = ridge_fit(z, y, lam)

    def objective(b):
        return np.sum((y - z @ b) ** 2) / (2 * len(y)) + 0.5 * lam * b @ b

    base = objective(model.beta_hat)
    deltas = rng.standard_normal((100, 3))
    deltas *= 1e-3 / np.linalg.norm(deltas, axis=1, keepdims=True)
    ok = all(base <= objective(model.beta_hat + d) for d in deltas)
    return ok, "objective minimal under 100 perturbations"


def check_theory_identities():
    rng = np.random.default_rng(5)
    s = rng.uniform(0.1, 5.0, 200)
    nu = rng.uniform(0.01, 5.0, 200)
    lam = rng.uniform(0.01, 2.0, 200)
    cl_ok = bool(np.all(r_cl(0.25, nu, lam) < r_cl(1.0, nu, lam))) and bool(np.all((r_cl(s, nu, lam) > 0) & (r_cl(s, nu, lam) <= 1)))
    cfg = d2_regression_config()
    ks = np.arange(11)
    closed = reg_curve_closed_form(2.0, 0.5, 1.0, 0.1, ks)
    general = reg_risk_curve_general(cfg, 0.1, ks)
    curve_err = float(np.max(np.abs(closed - general) / closed))
    la, lb = 2.0, 0.5
    ratios = shrink_eigenvalues(lb, ks) / shrink_eigenvalues(la, ks)
    ok = cl_ok and curve_err <= 1e-10 and bool(np.all(np.diff(ratios) < 0))
    return ok, f"closed-form curve rel err {curve_err:.2e}"


def check_sampler_identity():
    ds = sample_regression(d2_regression_config(), 50, 25, seed=9)
    ok = np.array_equal(ds.features_z, ds.latents_x @ d2_regression_config().projection_m)
    return bool(ok), "Z == X M"


def check_rerun_from_manifest():
    from . import cli

    argv = ["reg-sweep", "--n", "200", "--trials", "2", "--kmax", "4", "--jobs", "1"]
    with tempfile.TemporaryDirectory() as tmp, contextlib.redirect_stdout(io.StringIO()):
        first, second, third = (Path(tmp) / name for name in ("a", "b", "c"))
        if cli.run(argv + ["--out", str(first)]) != 0:
            return False, "first run failed"
        cli.run(argv + ["--out", str(second)])
        cli.run(["reg-sweep", "--config", str(first / "manifest.json"), "--out", str(third)])
        files = ("risk_curve.csv", "manifest.json")
        same = all((first / f).read_bytes() == (other / f).read_bytes() for f in files for other in (second, third))
    return same, "byte-identical reruns (direct and from manifest)"


CHECKS = (
    ("row_stochastic", check_row_stochastic),
    ("constant_fixed_point", check_constant_fixed_point),
    ("smooth_k0_identity", check_k0_identity),
    ("permutation_equivariance", check_permutation_equivariance),
    ("contraction_to_limit", check_contraction),
    ("ridge_optimality", check_ridge_optimality),
    ("theory_identities", check_theory_identities),
    ("features_equal_latents_times_m", check_sampler_identity),
    ("rerun_from_manifest", check_rerun_from_manifest),
)


def run_selftest():
    """Run every check; return rows (name, passed, detail, seconds)."""
    rows = []
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, don't abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail, time.perf_counter() - start))
    return rows
