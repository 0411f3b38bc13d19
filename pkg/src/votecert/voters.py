"""Base classifier ensembles: decision stumps, a small random forest, and
prediction-matrix ingestion for externally trained voters.

Ensembles are immutable after construction; training is deterministic under
a fixed seed, so prediction matrices are reproducible bit-exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .votes import PredictionMatrix

__all__ = [
    "Stump",
    "StumpEnsemble",
    "ForestConfig",
    "Forest",
    "make_stumps",
    "train_forest",
    "predict_matrix",
    "ingest_predictions",
    "export_predictions",
    "PredictionFileError",
]


class PredictionFileError(ValueError):
    """Malformed prediction CSV; the message names the offending row."""


@dataclass(frozen=True)
class Stump:
    """Axis-aligned threshold voter: predicts above_class when x > threshold."""

    feature: int
    threshold: float
    above_class: int

    def predict(self, features: np.ndarray) -> np.ndarray:
        below = 3 - self.above_class  # binary labels {1, 2}
        return np.where(features[:, self.feature] > self.threshold, self.above_class, below)


@dataclass(frozen=True)
class StumpEnsemble:
    stumps: tuple
    num_classes: int = 2

    def __len__(self) -> int:
        return len(self.stumps)

    def predict_all(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        cols = [s.predict(features) for s in self.stumps]
        return np.stack(cols, axis=1)


def make_stumps(train_features, thresholds_per_feature: int = 6) -> StumpEnsemble:
    """Stump grid for binary tasks: per feature, evenly spaced thresholds
    strictly between the training min and max, and one stump per class
    orientation per threshold (2 * thresholds_per_feature per feature).

    Constant features yield degenerate single-class stumps, which is valid.
    """
    X = np.asarray(train_features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("train_features must be a non-empty 2-d matrix")
    T = int(thresholds_per_feature)
    if T < 1:
        raise ValueError("thresholds_per_feature must be >= 1")
    stumps = []
    for j in range(X.shape[1]):
        lo = float(X[:, j].min())
        hi = float(X[:, j].max())
        for i in range(1, T + 1):
            t = lo + (hi - lo) * i / (T + 1)
            stumps.append(Stump(j, t, above_class=1))
            stumps.append(Stump(j, t, above_class=2))
    return StumpEnsemble(tuple(stumps))


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters: 10 trees on half-size bags, sqrt(p) features
    per tree, Gini splits, unbounded depth."""

    num_trees: int = 10
    bag_fraction: float = 0.5
    features_per_tree: int | None = None
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < self.bag_fraction <= 1.0:
            raise ValueError("bag_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    klass: int = 0  # leaf prediction when feature < 0


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(np.dot(p, p))


def _majority(y: np.ndarray, num_classes: int) -> int:
    counts = np.bincount(y, minlength=num_classes + 1)[1:]
    return int(np.argmax(counts)) + 1  # argmax ties -> smallest class


_GAIN_EPS = 1e-12


def _grow(X: np.ndarray, y: np.ndarray, feats: np.ndarray, num_classes: int,
          depth: int, max_depth: int | None) -> _Node:
    counts = np.bincount(y, minlength=num_classes + 1)[1:]
    if np.count_nonzero(counts) <= 1:
        return _Node(klass=_majority(y, num_classes))
    if max_depth is not None and depth >= max_depth:
        return _Node(klass=_majority(y, num_classes))
    n = y.size
    parent = _gini(counts)
    best_gain = _GAIN_EPS
    best = None
    for f in feats:  # ascending feature order pins gain ties
        vals = np.unique(X[:, f])
        if vals.size < 2:
            continue
        for t in 0.5 * (vals[:-1] + vals[1:]):  # ascending threshold order
            left = X[:, f] <= t
            nl = int(left.sum())
            cl = np.bincount(y[left], minlength=num_classes + 1)[1:]
            cr = counts - cl
            gain = parent - (nl * _gini(cl) + (n - nl) * _gini(cr)) / n
            if gain > best_gain:
                best_gain = gain
                best = (int(f), float(t), left)
    if best is None:
        return _Node(klass=_majority(y, num_classes))
    f, t, left = best
    return _Node(
        feature=f,
        threshold=t,
        left=_grow(X[left], y[left], feats, num_classes, depth + 1, max_depth),
        right=_grow(X[~left], y[~left], feats, num_classes, depth + 1, max_depth),
    )


def _predict_tree(node: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.int64)
    idx = np.arange(X.shape[0])

    def descend(nd: _Node, rows: np.ndarray):
        if nd.feature < 0:
            out[rows] = nd.klass
            return
        left = X[rows, nd.feature] <= nd.threshold
        descend(nd.left, rows[left])
        descend(nd.right, rows[~left])

    descend(node, idx)
    return out


@dataclass(frozen=True)
class Forest:
    trees: tuple
    num_classes: int

    def __len__(self) -> int:
        return len(self.trees)

    def predict_all(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=float)
        return np.stack([_predict_tree(t, X) for t in self.trees], axis=1)


def train_forest(features, labels, cfg: ForestConfig) -> Forest:
    """Bagged Gini trees: each draws floor(bag_fraction * n) rows with
    replacement and floor(sqrt(p)) feature indices without replacement, then
    grows greedily while some split has positive gain.  Split candidates are
    midpoints of consecutive sorted unique values; ties break toward the
    lowest feature index, then the lowest threshold.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("features and labels must have matching rows")
    n, p = X.shape
    bag_size = int(n * cfg.bag_fraction)
    if bag_size < 1:
        raise ValueError("dataset too small for the requested bag fraction")
    num_classes = int(y.max())
    n_feats = cfg.features_per_tree or max(1, int(math.isqrt(p)))
    n_feats = min(n_feats, p)
    trees = []
    for i in range(cfg.num_trees):
        rng = np.random.default_rng((cfg.seed, i))
        bag = rng.integers(0, n, size=bag_size)
        feats = np.sort(rng.choice(p, size=n_feats, replace=False))
        trees.append(_grow(X[bag], y[bag], feats, num_classes, 0, cfg.max_depth))
    return Forest(tuple(trees), num_classes)


def predict_matrix(ensemble, features, labels) -> PredictionMatrix:
    """Evaluate every voter on every example."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("features must be a non-empty 2-d matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("labels length must match the number of examples")
    preds = ensemble.predict_all(X)
    return PredictionMatrix(preds, y, ensemble.num_classes)


def ingest_predictions(path) -> PredictionMatrix:
    """Load a prediction CSV with header ``label,v1,...,vd``.

    Entries are integer class indices >= 1; ragged or malformed rows raise a
    PredictionFileError naming the data row (1-based).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PredictionFileError("empty prediction file") from None
        if len(header) < 3 or header[0] != "label":
            raise PredictionFileError("header must be label,v1,...,vd")
        width = len(header)
        rows = []
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != width:
                raise PredictionFileError(f"row {i}: expected {width} fields, got {len(rec)}")
            try:
                values = [int(tok) for tok in rec]
            except ValueError:
                raise PredictionFileError(f"row {i}: non-integer class index") from None
            if min(values) < 1:
                raise PredictionFileError(f"row {i}: class indices must be >= 1")
            rows.append(values)
    if not rows:
        raise PredictionFileError("prediction file has no data rows")
    table = np.asarray(rows, dtype=np.int64)
    num_classes = max(2, int(table.max()))
    return PredictionMatrix(table[:, 1:], table[:, 0], num_classes)


def export_predictions(P: PredictionMatrix, path) -> None:
    """Inverse of ingest_predictions; the round trip is exact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"v{j+1}" for j in range(P.num_voters)])
        for y, row in zip(P.labels, P.preds):
            writer.writerow([int(y)] + [int(v) for v in row])
