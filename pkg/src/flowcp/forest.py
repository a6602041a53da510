"""Bagged CART regression trees and the synthetic-data oracle predictor.

Trees split on variance reduction over a random feature subset of size
ceil(sqrt(d)) per node; each tree sees its own bootstrap resample drawn
from a stream derived deterministically from (seed, tree index), so the
fit is reproducible and could be parallelized per tree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, DatasetMeta
from .errors import EmptyDataset, ShapeMismatch

__all__ = ["RegressionTree", "ForestModel", "OraclePredictor", "fit_forest",
           "oracle_for", "mae", "save_forest", "load_forest"]


@dataclass
class RegressionTree:
    """Flat-array binary tree; leaves have feature index -1."""

    feature: np.ndarray   # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray      # int child indices
    right: np.ndarray
    value: np.ndarray     # leaf means (0 elsewhere)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            mask = X[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], idx[mask]))
            stack.append((self.right[node], idx[~mask]))
        return out


class _TreeBuilder:
    def __init__(self, X, y, max_depth, min_leaf, rng):
        self.X, self.y = X, y
        self.max_depth, self.min_leaf, self.rng = max_depth, min_leaf, rng
        self.n_sub = max(1, math.ceil(math.sqrt(X.shape[1])))
        self.feature, self.threshold = [], []
        self.left, self.right, self.value = [], [], []

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _best_split(self, idx):
        y = self.y[idx]
        n = idx.size
        feats = self.rng.choice(self.X.shape[1], size=self.n_sub, replace=False)
        best = None  # (sse, feature, threshold)
        for f in feats:
            x = self.X[idx, f]
            order = np.argsort(x, kind="stable")
            xs, ys = x[order], y[order]
            csum = np.cumsum(ys)
            csum2 = np.cumsum(ys**2)
            total, total2 = csum[-1], csum2[-1]
            ks = np.arange(self.min_leaf, n - self.min_leaf + 1)
            if ks.size == 0:
                continue
            valid = xs[ks - 1] < xs[ks]
            ks = ks[valid]
            if ks.size == 0:
                continue
            sl, sl2 = csum[ks - 1], csum2[ks - 1]
            sse = (sl2 - sl**2 / ks) + ((total2 - sl2) - (total - sl) ** 2 / (n - ks))
            j = int(np.argmin(sse))
            if best is None or sse[j] < best[0]:
                k = ks[j]
                best = (float(sse[j]), int(f), 0.5 * (xs[k - 1] + xs[k]))
        return best

    def build(self, idx, depth) -> int:
        node = self._new_node()
        y = self.y[idx]
        if (
            depth >= self.max_depth
            or idx.size < 2 * self.min_leaf
            or np.all(y == y[0])
        ):
            self.value[node] = float(y.mean())
            return node
        found = self._best_split(idx)
        if found is None:
            self.value[node] = float(y.mean())
            return node
        _, f, thr = found
        mask = self.X[idx, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[mask], depth + 1)
        self.right[node] = self.build(idx[~mask], depth + 1)
        return node

    def finish(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=float),
        )


@dataclass
class ForestModel:
    """Bootstrap ensemble; prediction is the mean over trees."""

    trees: list[RegressionTree]
    n_trees: int
    max_depth: int
    min_leaf: int
    seed: int

    def predict(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=float))
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def fit_forest(train: Dataset, n_trees: int = 100, max_depth: int = 12,
               min_leaf: int = 5, seed: int = 0) -> ForestModel:
    """Fit the bagged tree ensemble on a training dataset."""
    if train.n == 0:
        raise EmptyDataset("cannot fit a forest on zero samples")
    if train.n < 2 * min_leaf:
        raise ValueError(f"need at least {2 * min_leaf} samples, got {train.n}")
    trees = []
    for t in range(n_trees):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, t])))
        idx = rng.integers(0, train.n, size=train.n)
        builder = _TreeBuilder(train.features, train.labels, max_depth, min_leaf, rng)
        builder.build(idx, depth=0)
        trees.append(builder.finish())
    return ForestModel(trees=trees, n_trees=n_trees, max_depth=max_depth,
                       min_leaf=min_leaf, seed=seed)


@dataclass
class OraclePredictor:
    """The exact conditional mean of a synthetic generator.

    Isolates calibration quality from regressor quality: prediction is
    features . w + offset with the generator's true coefficients.
    """

    w: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).ravel()

    def predict(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=float))
        if X.shape[1] != self.w.size:
            raise ShapeMismatch(f"expected {self.w.size} features, got {X.shape[1]}")
        return X @ self.w + self.offset


def oracle_for(meta: DatasetMeta) -> OraclePredictor:
    """Oracle predictor for a generated dataset's conditional mean."""
    if meta.kind == "toy":
        return OraclePredictor(w=np.zeros(1), offset=0.0)
    if meta.w is None:
        raise ValueError(f"no true coefficients recorded for kind {meta.kind!r}")
    return OraclePredictor(w=meta.w, offset=0.1)


def mae(predictions, labels) -> float:
    """Mean absolute error."""
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if p.size != y.size or p.size == 0:
        raise ShapeMismatch(f"lengths differ or empty: {p.size} vs {y.size}")
    return float(np.mean(np.abs(p - y)))


def save_forest(model: ForestModel, path):
    """Write the ensemble to the shared JSON parameter format."""
    doc = {
        "format_version": 1,
        "n_trees": model.n_trees,
        "max_depth": model.max_depth,
        "min_leaf": model.min_leaf,
        "seed": model.seed,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_forest(path) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
    trees = [
        RegressionTree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray(t["threshold"], dtype=float),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            value=np.asarray(t["value"], dtype=float),
        )
        for t in doc["trees"]
    ]
    return ForestModel(trees=trees, n_trees=doc["n_trees"], max_depth=doc["max_depth"],
                       min_leaf=doc["min_leaf"], seed=doc["seed"])
