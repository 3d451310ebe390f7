"""Load attributed graphs from CSV files and sweep the smoothing order on them.

File formats (0-based node ids; an optional non-numeric header row is skipped):

* edges:    ``src,dst[,weight]``; weight defaults to 1. Edges are undirected,
  and repeated pairs are merged by max (or sum).
* features: one row per node in id order, all columns numeric.
* labels:   one value per node in id order; numbers or class names.
* split:    ``SplitSpec(fraction, seed)`` or an index file with one training
  node id per line.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateDegree, DimensionMismatch, ParseError, UnknownNodeId
from .graph import Adjacency, row_normalize
from .learn import check_ks, limit_prediction, sweep_risks
from .model import RiskCurve

log = logging.getLogger(__name__)

MAX_NODES = 20000
LABEL_ENCODINGS = ("auto", "numeric", "binary", "index", "onehot")


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.5
    seed: int = 0
    index_file: Optional[Path] = None


@dataclass(frozen=True)
class ExternalGraphDataset:
    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    classes: tuple = ()

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_rows(path):
    """Yield (line_number, fields) for non-empty lines, skipping a textual header."""
    path = Path(path)
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or all(c == "" for c in row) or row[0].startswith("#"):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row if c):
                continue
            yield lineno, row


def read_features(path):
    rows = []
    width = None
    for lineno, row in _read_rows(path):
        try:
            values = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(path, lineno, f"non-numeric feature: {exc}") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(path, lineno, f"expected {width} columns, got {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise ParseError(path, lineno, "NaN or Inf in features")
        rows.append(values)
    if not rows:
        raise ParseError(path, 0, "no feature rows")
    return np.array(rows)


LABEL_HEADERS = {"label", "labels", "y", "class", "target"}


def read_labels(path, encoding="auto"):
    """Return (labels, class_names). A first row named like a column header is skipped."""
    if encoding not in LABEL_ENCODINGS:
        raise ValueError(f"unknown label encoding {encoding!r}")
    raw = []
    path = Path(path)
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if row and row[0].strip():
                raw.append((lineno, row[0].strip()))
    if raw and raw[0][1].lower() in LABEL_HEADERS:
        raw = raw[1:]
    values = [v for _, v in raw]
    numeric = all(_is_number(v) for v in values)
    if encoding == "auto":
        encoding = "numeric" if numeric else "index"
    if encoding == "numeric":
        for lineno, v in raw:
            if not _is_number(v):
                raise ParseError(path, lineno, f"non-numeric label {v!r}")
        return np.array([float(v) for v in values]), ()
    classes = tuple(sorted(set(values), key=float if numeric else None))
    index = {c: i for i, c in enumerate(classes)}
    codes = np.array([index[v] for v in values], dtype=int)
    if encoding == "binary":
        if len(classes) != 2:
            raise ValueError(f"binary encoding needs exactly 2 classes, found {len(classes)}")
        return np.where(codes == 1, 1.0, -1.0), classes
    if encoding == "index":
        return codes.astype(float), classes
    return np.eye(len(classes))[codes], classes


def read_edges(path, n, duplicate="max"):
    if duplicate not in ("max", "sum"):
        raise ValueError("duplicate must be 'max' or 'sum'")
    adj = np.zeros((n, n))
    for lineno, row in _read_rows(path):
        if len(row) not in (2, 3):
            raise ParseError(path, lineno, f"expected src,dst[,weight], got {len(row)} fields")
        try:
            src, dst = int(row[0]), int(row[1])
            weight = float(row[2]) if len(row) == 3 and row[2] != "" else 1.0
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if not (math.isfinite(weight) and weight >= 0):
            raise ParseError(path, lineno, f"invalid weight {weight}")
        for node in (src, dst):
            if not 0 <= node < n:
                raise UnknownNodeId(f"{path}:{lineno}: node id {node} not in 0..{n - 1}")
        pairs = {(src, dst), (dst, src)}
        for i, j in pairs:
            adj[i, j] = max(adj[i, j], weight) if duplicate == "max" else adj[i, j] + weight
    return adj


def make_split(n, split: SplitSpec):
    if split.index_file is not None:
        ids = []
        for lineno, row in _read_rows(split.index_file):
            try:
                ids.append(int(row[0]))
            except ValueError:
                raise ParseError(split.index_file, lineno, f"bad node id {row[0]!r}") from None
        train = np.unique(np.array(ids, dtype=int))
        if train.size and (train.min() < 0 or train.max() >= n):
            raise UnknownNodeId(f"split file references ids outside 0..{n - 1}")
    else:
        if not 0 < split.fraction < 1:
            raise ValueError("split fraction must be in (0, 1)")
        perm = np.random.default_rng(split.seed).permutation(n)
        train = np.sort(perm[: int(round(split.fraction * n))])
    test = np.setdiff1d(np.arange(n), train)
    if train.size == 0 or test.size == 0:
        raise ValueError("split leaves an empty train or test set")
    return train, test


def load_graph(
    edges_path,
    features_path,
    labels_path,
    split_spec: SplitSpec = SplitSpec(),
    label_encoding="auto",
    duplicate="max",
    max_nodes=MAX_NODES,
) -> ExternalGraphDataset:
    features = read_features(features_path)
    n = features.shape[0]
    if n > max_nodes:
        raise DimensionMismatch(f"{n} nodes exceeds the dense-adjacency cap of {max_nodes}")
    labels, classes = read_labels(labels_path, label_encoding)
    if labels.shape[0] != n:
        raise DimensionMismatch(f"{labels.shape[0]} labels for {n} feature rows")
    adjacency = read_edges(edges_path, n, duplicate)
    train, test = make_split(n, split_spec)
    for arr in (adjacency, features, labels, train, test):
        arr.setflags(write=False)
    return ExternalGraphDataset(adjacency, features, labels, train, test, classes)


def augmented_adjacency(dataset: ExternalGraphDataset, eps=0.0, eps_mode="self_loops", isolated="self_loop"):
    """Adjacency after the epsilon floor and the isolated-node policy.

    ``eps_mode="self_loops"`` adds eps on the diagonal only; ``"all_pairs"`` adds
    it to every entry like the latent kernel. Nodes left with zero degree get a
    unit self-loop (with a warning) unless ``isolated="error"``.
    """
    a = np.array(dataset.adjacency, dtype=float)
    if eps > 0:
        if eps_mode == "all_pairs":
            a += eps
        elif eps_mode == "self_loops":
            a[np.diag_indices_from(a)] += eps
        else:
            raise ValueError(f"unknown eps_mode {eps_mode!r}")
    lonely = np.flatnonzero(a.sum(axis=1) <= 0)
    if lonely.size:
        if isolated == "error":
            raise DegenerateDegree(f"{lonely.size} isolated node(s), first id {lonely[0]}")
        log.warning("injecting unit self-loops on %d isolated node(s)", lonely.size)
        a[lonely, lonely] = 1.0
    return Adjacency.from_weights(a)


def dataset_sweep(dataset: ExternalGraphDataset, lam, ks, eps=0.0, eps_mode="self_loops", isolated="self_loop") -> RiskCurve:
    op = row_normalize(augmented_adjacency(dataset, eps, eps_mode, isolated))
    ks = check_ks(ks)
    risks = sweep_risks(op, dataset.features, dataset.labels, dataset.train_idx, dataset.test_idx, lam, ks)
    _, level = limit_prediction(op, dataset.features, dataset.labels, dataset.train_idx, dataset.test_idx, lam)
    return RiskCurve(ks, risks, np.zeros_like(risks), oversmoothing_level=level)
