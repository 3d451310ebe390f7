"""Command-line entry point.

Every subcommand resolves its parameters from built-in defaults, then an
optional ``--config`` file (flat ``key = value`` lines, or a previous run's
``manifest.json``), then command-line flags. Data goes to files under
``--out``; a one-line summary goes to stdout.

Exit codes: 0 success, 1 invalid usage/configuration or a failed check,
2 runtime error.
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GraphSmoothError
from .experiments import (
    DEFAULT_EPS_CURVES,
    DEFAULT_EPS_DIAGNOSTIC,
    DEFAULT_KMAX_CLS,
    DEFAULT_KMAX_REG,
    DEFAULT_LAM,
    DEFAULT_MU_NORM,
    DEFAULT_N,
    DEFAULT_N_LIST,
    DEFAULT_TRIALS,
    emit_results,
    kernel_moment_check,
    monte_carlo,
    phi_diagnostic,
    sample_regression,
    write_manifest,
    write_table,
)
from .graph import build_adjacency, ergodic_limit, row_normalize, smooth
from .learn import oversmoothing_prediction, ridge_fit
from .model import (
    ClassificationModelConfig,
    KernelConfig,
    RegressionModelConfig,
    d2_classification_config,
    d2_regression_config,
    ensure_valid,
    parse_matrix,
    parse_vector,
    selector,
)
from .theory import cls_risk_curve, reg_curve_closed_form

log = logging.getLogger("graphsmooth")


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


# --------------------------------------------------------------------------
# Parameters


def _int_list(value):
    if isinstance(value, str):
        value = ast.literal_eval(value)
    return [int(v) for v in value]


PARAM_TYPES = {
    "n": int,
    "n_train": int,
    "trials": int,
    "lam": float,
    "eps": float,
    "kmax": int,
    "seed": int,
    "jobs": int,
    "l1": float,
    "l2": float,
    "b": float,
    "sigma": str,
    "beta_star": str,
    "projection_m": str,
    "mu": str,
    "mu_norm": float,
    "nu_norm": float,
    "c": float,
    "family": str,
    "k": int,
    "n_list": _int_list,
    "reps": int,
    "instances": int,
    "mc_samples": int,
    "edges": str,
    "features": str,
    "labels": str,
    "train_frac": float,
    "split_file": str,
    "encoding": str,
    "duplicate": str,
    "eps_mode": str,
    "isolated": str,
}

COMMON = {"seed": 0, "jobs": 1}

DEFAULTS = {
    "reg-sweep": {
        **COMMON, "n": DEFAULT_N, "n_train": None, "trials": DEFAULT_TRIALS, "lam": DEFAULT_LAM,
        "eps": DEFAULT_EPS_CURVES, "kmax": DEFAULT_KMAX_REG, "l1": 2.0, "l2": 0.5, "b": 1.0,
        "sigma": None, "beta_star": None, "projection_m": None,
    },
    "cls-sweep": {
        **COMMON, "n": DEFAULT_N, "n_train": None, "trials": DEFAULT_TRIALS, "lam": DEFAULT_LAM,
        "eps": DEFAULT_EPS_CURVES, "kmax": DEFAULT_KMAX_CLS, "mu_norm": DEFAULT_MU_NORM,
        "mu": None, "projection_m": None,
    },
    "oversmooth-check": {
        **COMMON, "n": 300, "n_train": None, "lam": DEFAULT_LAM, "eps": 0.1, "k": 2000,
        "l1": 2.0, "l2": 0.5, "b": 1.0, "sigma": None, "beta_star": None, "projection_m": None,
    },
    "lemma-check": {
        **COMMON, "eps": DEFAULT_EPS_DIAGNOSTIC, "n_list": list(DEFAULT_N_LIST), "reps": 5,
        "instances": 20, "mc_samples": 1_000_000, "l1": 2.0, "l2": 0.5, "b": 1.0,
        "mu_norm": DEFAULT_MU_NORM,
    },
    "theory-curve": {
        "family": "reg-d2", "l1": 2.0, "l2": 0.5, "b": 1.0, "lam": DEFAULT_LAM, "kmax": 10,
        "nu_norm": None, "mu_norm": DEFAULT_MU_NORM, "c": 0.0,
    },
    "dataset-sweep": {
        **COMMON, "edges": None, "features": None, "labels": None, "train_frac": 0.5,
        "split_file": None, "encoding": "auto", "duplicate": "max", "lam": DEFAULT_LAM,
        "eps": 0.0, "eps_mode": "self_loops", "isolated": "self_loop", "kmax": 50,
    },
    "selftest": {},
}


def read_config(path):
    """Flat ``key = value`` file, or the ``params`` block of a manifest.json."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        data = json.loads(text)
        return dict(data.get("params", data))
    params = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        params[key.replace("-", "_")] = value
    return params


def resolve_params(command, config_path, overrides):
    params = dict(DEFAULTS[command])
    layers = [read_config(config_path)] if config_path else []
    layers.append({k: v for k, v in overrides.items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            if key not in params:
                raise UsageError(f"unknown parameter {key!r} for {command}")
            if value is None or value == "":
                params[key] = None
                continue
            try:
                params[key] = PARAM_TYPES[key](value)
            except (ValueError, SyntaxError) as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
    return params


def regression_config(params) -> RegressionModelConfig:
    if params["sigma"] is None and params["beta_star"] is None and params["projection_m"] is None:
        cfg = d2_regression_config(params["l1"], params["l2"], params["b"])
    else:
        base = d2_regression_config(params["l1"], params["l2"], params["b"])
        sigma = parse_matrix(params["sigma"]) if params["sigma"] else base.covariance_sigma
        beta = parse_vector(params["beta_star"]) if params["beta_star"] else base.beta_star
        m = parse_matrix(params["projection_m"]) if params["projection_m"] else selector(sigma.shape[0], [0])
        cfg = RegressionModelConfig(sigma, beta, m)
    return _checked(cfg)


def classification_config(params) -> ClassificationModelConfig:
    if params.get("mu") is None and params.get("projection_m") is None:
        cfg = d2_classification_config(params["mu_norm"])
    else:
        mu = parse_vector(params["mu"]) if params.get("mu") else d2_classification_config(params["mu_norm"]).mu
        m = parse_matrix(params["projection_m"]) if params.get("projection_m") else selector(mu.size, [0])
        cfg = ClassificationModelConfig(mu, m)
    return _checked(cfg)


def _checked(cfg):
    try:
        return ensure_valid(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _n_train(params):
    n_train = params["n_train"] if params["n_train"] is not None else params["n"] // 2
    if not 0 < n_train < params["n"]:
        raise UsageError(f"need 0 < n_train < n (n={params['n']}, n_train={n_train})")
    return n_train


def _kernel(params):
    if params["eps"] < 0:
        raise UsageError("eps must be non-negative")
    return KernelConfig(params["eps"])


# --------------------------------------------------------------------------
# Commands


def _sweep(command, params, out):
    config = regression_config(params) if command == "reg-sweep" else classification_config(params)
    if params["trials"] < 1 or params["kmax"] < 1 or params["lam"] <= 0:
        raise UsageError("need trials >= 1, kmax >= 1, lam > 0")
    curve = monte_carlo(
        config, _kernel(params), params["lam"], list(range(params["kmax"] + 1)), params["n"],
        _n_train(params), params["trials"], params["seed"], jobs=params["jobs"],
    )
    path = emit_results(curve, out / "risk_curve.csv")
    k_star = curve.k_star_empirical
    summary = (
        f"{command}: k*={k_star} min_risk={curve.risk_at(k_star):.6g} "
        f"R0={curve.risk_at(0):.6g} oversmoothing_level={curve.oversmoothing_level:.6g} "
        f"interior_fraction={curve.interior_fraction:.2f} trials={curve.n_trials}"
    )
    if "error_constant_c" in curve.info:
        summary += f" error_constant_c={curve.info['error_constant_c']:.6g}"
    return [path], summary


def cmd_oversmooth_check(params, out):
    config = regression_config(params)
    kernel = _kernel(params)
    if kernel.epsilon <= 0:
        raise UsageError("oversmooth-check needs eps > 0 for a connected graph")
    ds = sample_regression(config, params["n"], _n_train(params), params["seed"])
    op = row_normalize(build_adjacency(ds.latents_x, kernel))
    k = params["k"]
    zk = smooth(op, ds.features_z, k)
    model = ridge_fit(zk[ds.train_slice()], ds.labels_y[ds.train_slice()], params["lam"], k)
    preds = model.predict(zk[ds.test_slice()])
    c_inf, limit_risk = oversmoothing_prediction(ds, op, params["lam"])
    limit = ergodic_limit(op, k)
    deviation = float(np.max(np.abs(preds - c_inf)))
    rows = [(int(i), float(p), float(c_inf)) for i, p in zip(range(ds.n_train, ds.n), preds)]
    path = write_table(out / "oversmooth.csv", ("node", "prediction", "c_inf"), rows)
    ok = deviation <= 1e-6 and limit.converged
    summary = (
        f"oversmooth-check: {'PASS' if ok else 'FAIL'} k={k} c_inf={c_inf:.10g} "
        f"max|pred-c_inf|={deviation:.3e} ||L^k-1d^T||={limit.distance:.3e} limit_risk={limit_risk:.6g}"
    )
    return [path], summary, ok


def cmd_lemma_check(params, out):
    rows = kernel_moment_check(params["instances"], params["mc_samples"], params["seed"])
    worst = max(r[4] for r in rows)
    files = [write_table(out / "kernel_moments.csv", ("instance", "quantity", "closed_form", "monte_carlo", "rel_err"), rows)]
    kernel = _kernel(params)
    slopes = {}
    for task, cfg in (
        ("regression", d2_regression_config(params["l1"], params["l2"], params["b"])),
        ("classification", d2_classification_config(params["mu_norm"])),
    ):
        diag = phi_diagnostic(task, cfg, kernel, params["n_list"], params["seed"], params["reps"])
        files.append(emit_results(diag, out / f"phi_{task}.csv"))
        slopes[task] = diag.slope_first
    ok = worst < 0.01 and all(-0.8 <= s <= -0.3 for s in slopes.values())
    summary = (
        f"lemma-check: {'PASS' if ok else 'FAIL'} max_rel_err={worst:.3e} "
        f"slope_reg={slopes['regression']:.3f} slope_cls={slopes['classification']:.3f}"
    )
    return files, summary, ok


def cmd_theory_curve(params, out):
    ks = np.arange(params["kmax"] + 1)
    if params["kmax"] < 0 or params["lam"] <= 0:
        raise UsageError("need kmax >= 0 and lam > 0")
    if params["family"] == "reg-d2":
        values = reg_curve_closed_form(params["l1"], params["l2"], params["b"], params["lam"], ks)
    elif params["family"] == "cls":
        mu_norm = params["mu_norm"]
        nu_norm = params["nu_norm"] if params["nu_norm"] is not None else mu_norm / math.sqrt(2.0)
        values = cls_risk_curve(nu_norm, mu_norm, params["lam"], params["c"], params["kmax"])
    else:
        raise UsageError(f"unknown family {params['family']!r} (reg-d2 or cls)")
    rows = [(int(k), math.nan, math.nan, float(v), 0) for k, v in zip(ks, values)]
    path = write_table(out / "theory_curve.csv", ("k", "emp_mean", "emp_std", "theory", "n_trials"), rows)
    k_min = int(np.argmin(values))
    return [path], f"theory-curve: family={params['family']} k*={k_min} min={values[k_min]:.6g}"


def cmd_dataset_sweep(params, out):
    from .ingest import SplitSpec, dataset_sweep, load_graph

    for key in ("edges", "features", "labels"):
        if not params[key]:
            raise UsageError(f"dataset-sweep needs --{key}")
    split = SplitSpec(params["train_frac"], params["seed"], Path(params["split_file"]) if params["split_file"] else None)
    ds = load_graph(params["edges"], params["features"], params["labels"], split, params["encoding"], params["duplicate"])
    curve = dataset_sweep(
        ds, params["lam"], range(params["kmax"] + 1), params["eps"], params["eps_mode"], params["isolated"]
    )
    path = emit_results(curve, out / "risk_curve.csv")
    k_star = curve.k_star_empirical
    return [path], (
        f"dataset-sweep: n={ds.n} k*={k_star} min_risk={curve.risk_at(k_star):.6g} "
        f"R0={curve.risk_at(0):.6g} R{params['kmax']}={curve.empirical_mean[-1]:.6g} "
        f"oversmoothing_level={curve.oversmoothing_level:.6g}"
    )


def cmd_selftest(params, out):
    from .selftest import run_selftest

    rows = run_selftest()
    path = write_table(out / "selftest.csv", ("check", "passed", "seconds"), [(r[0], int(r[1]), r[3]) for r in rows])
    for name, ok, detail, secs in rows:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({secs:.2f}s)")
    ok = all(r[1] for r in rows)
    total = sum(r[3] for r in rows)
    return [path], f"selftest: {'PASS' if ok else 'FAIL'} {sum(r[1] for r in rows)}/{len(rows)} checks in {total:.1f}s", ok


COMMANDS = {
    "reg-sweep": ("Regression k-sweep over seeded trials (two-dimensional example by default)", lambda p, o: _sweep("reg-sweep", p, o)),
    "cls-sweep": ("Two-Gaussian classification k-sweep over seeded trials", lambda p, o: _sweep("cls-sweep", p, o)),
    "oversmooth-check": ("Check the k -> infinity constant prediction on a connected graph", cmd_oversmooth_check),
    "lemma-check": ("Gaussian kernel moments vs Monte Carlo, and smoothing-map concentration", cmd_lemma_check),
    "theory-curve": ("Tabulate a closed-form risk curve", cmd_theory_curve),
    "dataset-sweep": ("k-sweep on an external edge-list graph", cmd_dataset_sweep),
    "selftest": ("Structural invariant suite", cmd_selftest),
}


# --------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


FLAGS = {
    "--seed": int, "--trials": int, "--n": int, "--n-train": int, "--lam": float, "--eps": float,
    "--kmax": int, "--jobs": int, "--k": int,
}
EXTRA_FLAGS = {
    "theory-curve": {"--family": str, "--l1": float, "--l2": float, "--b": float, "--mu-norm": float, "--nu-norm": float, "--c": float},
    "reg-sweep": {"--l1": float, "--l2": float, "--b": float},
    "cls-sweep": {"--mu-norm": float},
    "dataset-sweep": {"--edges": str, "--features": str, "--labels": str, "--train-frac": float, "--split-file": str, "--encoding": str},
}


def build_parser():
    parser = _Parser(prog="graphsmooth", description="Mean-aggregation smoothing experiments.")
    parser.add_argument("--version", action="version", version=f"graphsmooth {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file or a previous manifest.json")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        keys = set(DEFAULTS[name])
        for flag, typ in {**FLAGS, **EXTRA_FLAGS.get(name, {})}.items():
            dest = flag[2:].replace("-", "_")
            if dest in keys:
                p.add_argument(flag, type=typ, dest=dest, default=None)
    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
        if overrides.get("jobs") is None and "jobs" in DEFAULTS[args.command]:
            overrides["jobs"] = os.cpu_count() or 1
        params = resolve_params(args.command, args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command][1](params, out)
    except UsageError as exc:
        print(f"graphsmooth: error: {exc}", file=sys.stderr)
        return 1
    except (GraphSmoothError, OSError, ValueError, ArithmeticError) as exc:
        print(f"graphsmooth: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    files, summary = result[0], result[1]
    ok = result[2] if len(result) > 2 else True
    recorded = {k: v for k, v in params.items() if k != "jobs"}
    write_manifest(out, args.command, recorded, files, __version__)
    print(summary)
    return 0 if ok else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
