"""Ridge regression on smoothed features and the k-sweep of its test risk.

The ridge model has no intercept. For +-1 classification labels with balanced
classes this is harmless; for other label sets the k -> infinity prediction is
shrunk towards zero by the ridge penalty (see :func:`oversmoothing_prediction`).
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import SolveFailure
from .graph import SmoothingOperator, iter_smooth
from .model import LatentDataset, RidgeModel, RiskCurve


def ridge_fit(features_train, labels_train, lam: float, smoothing_order: int = 0) -> RidgeModel:
    """beta = (Z^T Z / n + lam I)^-1 Z^T Y / n via a Cholesky-based solve."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    z = np.asarray(features_train, dtype=float)
    y = np.asarray(labels_train, dtype=float)
    n, p = z.shape
    gram = z.T @ z / n
    gram[np.diag_indices(p)] += lam
    rhs = z.T @ y / n
    try:
        beta = linalg.solve(gram, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, linalg.LinAlgError) as exc:
        raise SolveFailure(f"regularized Gram matrix not positive definite (lambda={lam})") from exc
    return RidgeModel(float(lam), beta, int(smoothing_order))


def test_risk(features_test, labels_test, model: RidgeModel) -> float:
    """Mean over test nodes of the squared residual norm."""
    y = np.asarray(labels_test, dtype=float)
    resid = y - model.predict(features_test)
    return float(np.sum(resid**2) / y.shape[0])


test_risk.__test__ = False  # not a pytest test


def fit_and_score(z_train, y_train, z_test, y_test, lam, k=0) -> float:
    return test_risk(z_test, y_test, ridge_fit(z_train, y_train, lam, k))


def check_ks(ks):
    ks = [int(k) for k in ks]
    if not ks or ks[0] != 0 or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"ks must be non-empty, strictly increasing and start at 0: {ks}")
    return ks


def sweep_risks(op: SmoothingOperator, features, labels, train_idx, test_idx, lam, ks) -> np.ndarray:
    """Test risk at each k in ``ks`` with Z^(k) built incrementally from Z^(k-1)."""
    labels = np.asarray(labels, dtype=float)
    y_tr, y_te = labels[train_idx], labels[test_idx]
    risks = []
    for k, zk in iter_smooth(op, features, ks):
        risks.append(fit_and_score(zk[train_idx], y_tr, zk[test_idx], y_te, lam, k))
    return np.array(risks)


def limit_prediction(op: SmoothingOperator, features, labels, train_idx, test_idx, lam):
    """Constant prediction and test risk once L^k has collapsed to 1 d^T."""
    z = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    v = op.stationary @ z
    vv = float(v @ v)
    y_bar = labels[train_idx].mean(axis=0)
    c_inf = vv / (lam + vv) * y_bar
    y_te = labels[test_idx]
    limit_risk = float(np.sum((y_te - c_inf) ** 2) / y_te.shape[0])
    return c_inf, limit_risk


def oversmoothing_prediction(dataset: LatentDataset, op: SmoothingOperator, lam: float):
    """Return (c_inf, limit_risk) with c_inf = ||v||^2 / (lam + ||v||^2) * mean(y_train), v = Z^T d."""
    return limit_prediction(
        op, dataset.features_z, dataset.labels_y, dataset.train_slice(), dataset.test_slice(), lam
    )


def k_sweep(dataset: LatentDataset, op: SmoothingOperator, lam: float, ks) -> RiskCurve:
    ks = check_ks(ks)
    risks = sweep_risks(
        op, dataset.features_z, dataset.labels_y, dataset.train_slice(), dataset.test_slice(), lam, ks
    )
    _, limit_risk = oversmoothing_prediction(dataset, op, lam)
    return RiskCurve(ks, risks, np.zeros_like(risks), oversmoothing_level=limit_risk)
