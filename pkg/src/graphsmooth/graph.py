"""Kernel adjacency, the mean-aggregation operator L = D^-1 A, and its ergodic limit."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateDegree
from .model import KernelConfig

DEGREE_FLOOR = 1e-12


@dataclass(frozen=True)
class Adjacency:
    weights: np.ndarray
    degrees: np.ndarray

    @classmethod
    def from_weights(cls, weights):
        w = np.array(weights, dtype=float)
        w.setflags(write=False)
        deg = w.sum(axis=1)
        deg.setflags(write=False)
        return cls(w, deg)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class SmoothingOperator:
    l_matrix: np.ndarray
    stationary: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.l_matrix.shape[0]

    def row_sum_error(self) -> float:
        return float(np.max(np.abs(self.l_matrix.sum(axis=1) - 1.0)))


def build_adjacency(latents_x, kernel: KernelConfig) -> Adjacency:
    """a_ij = eps + exp(-||x_i - x_j||^2 / 2), self-pairs included."""
    x = np.asarray(latents_x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an n x d latent matrix with n >= 2")
    sq = cdist(x, x, metric="sqeuclidean")
    return Adjacency.from_weights(kernel.epsilon + np.exp(-0.5 * sq))


def row_normalize(adj: Adjacency, degree_floor: float = DEGREE_FLOOR) -> SmoothingOperator:
    deg = adj.degrees
    bad = np.flatnonzero(deg <= degree_floor)
    if bad.size:
        raise DegenerateDegree(
            f"{bad.size} node(s) with degree <= {degree_floor:g} (first: node {bad[0]}, degree {deg[bad[0]]:.3e})"
        )
    lmat = adj.weights / deg[:, None]
    lmat.setflags(write=False)
    stationary = deg / deg.sum()
    stationary.setflags(write=False)
    return SmoothingOperator(lmat, stationary, deg)


def smooth(op: SmoothingOperator, features, k: int):
    """Apply k rounds of mean aggregation, L^k Z, one product at a time."""
    if k < 0:
        raise ValueError("k must be non-negative")
    z = np.asarray(features, dtype=float)
    if z.shape[0] != op.n:
        raise ValueError(f"features have {z.shape[0]} rows, operator has {op.n}")
    for _ in range(k):
        z = op.l_matrix @ z
    return z


def iter_smooth(op: SmoothingOperator, features, ks):
    """Yield (k, L^k Z) for increasing ks, reusing the previous power."""
    z = np.asarray(features, dtype=float)
    current = 0
    for k in ks:
        z = smooth(op, z, k - current)
        current = k
        yield k, z


@dataclass(frozen=True)
class ErgodicLimit:
    """Factored rank-one limit 1_n d^T plus an optional convergence check at order k."""

    ones: np.ndarray
    stationary: np.ndarray
    k: int | None = None
    distance: float | None = None
    tol: float = 1e-8

    @property
    def converged(self) -> bool | None:
        if self.distance is None:
            return None
        return self.distance < self.tol

    def dense(self):
        return np.outer(self.ones, self.stationary)

    def apply(self, features):
        """1_n d^T Z without forming the n x n matrix."""
        z = np.asarray(features, dtype=float)
        return np.outer(self.ones, self.stationary @ z) if z.ndim == 2 else self.ones * (self.stationary @ z)


def power_distance(op: SmoothingOperator, k: int) -> float:
    """Spectral norm ||L^k - 1_n d^T||."""
    lk = np.linalg.matrix_power(op.l_matrix, k)
    return float(np.linalg.norm(lk - np.outer(np.ones(op.n), op.stationary), 2))


def ergodic_limit(op: SmoothingOperator, k: int | None = None, tol: float = 1e-8) -> ErgodicLimit:
    ones = np.ones(op.n)
    if k is None:
        return ErgodicLimit(ones, op.stationary, tol=tol)
    return ErgodicLimit(ones, op.stationary, k=k, distance=power_distance(op, k), tol=tol)


def convergence_order(op: SmoothingOperator, tol: float = 1e-8, k_cap: int = 1 << 16) -> int | None:
    """Order k after which ||L^k - 1 d^T|| < tol, found by doubling then bisection.

    Returns None when the distance is still above ``tol`` at ``k_cap``.
    """
    hi = 1
    while power_distance(op, hi) >= tol:
        hi *= 2
        if hi > k_cap:
            return None
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power_distance(op, mid) < tol:
            hi = mid
        else:
            lo = mid
    return hi


def dump_matrix_csv(matrix, path) -> Path:
    """Row-major CSV with 17 significant digits, for cross-tool debugging."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix, dtype=float):
            writer.writerow([f"{v:.17g}" for v in row])
    return path
