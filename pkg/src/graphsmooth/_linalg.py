"""Small dense linear-algebra helpers shared by the sampler and the theory code."""

import warnings

import numpy as np

CLAMP_WARN = 1e-12


def sym_eigh(S):
    """Eigendecomposition of a symmetric matrix, raising EigFailure on non-convergence."""
    from .errors import EigFailure

    S = np.asarray(S, dtype=float)
    try:
        w, U = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise EigFailure(str(exc)) from exc
    return w, U


def sym_sqrt(S):
    """Symmetric square root of a PSD matrix.

    Negative eigenvalues are clamped to zero; a warning is issued when the
    clamped amount exceeds ``CLAMP_WARN``.
    """
    w, U = sym_eigh(S)
    if w.min() < -CLAMP_WARN:
        warnings.warn(
            f"clamping negative eigenvalue {w.min():.3e} in matrix square root",
            RuntimeWarning,
            stacklevel=2,
        )
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.T


def sym_fun(S, f):
    """Apply a scalar map to the eigenvalues of a symmetric matrix."""
    w, U = sym_eigh(S)
    return (U * f(w)) @ U.T


def is_symmetric(S, tol):
    S = np.asarray(S)
    return S.ndim == 2 and S.shape[0] == S.shape[1] and np.max(np.abs(S - S.T), initial=0.0) <= tol
