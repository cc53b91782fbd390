"""Extremely-randomized-trees regressor with across-tree uncertainty.

Each tree is grown on the full sample (no bootstrap). At every node a
random subset of features is considered, one uniform random threshold is
drawn per feature inside the node-local (min, max), and the split with the
best variance reduction wins. Uncertainty is the population standard
deviation of the per-tree mean predictions.

Trees are stored as flat arrays (feature, threshold, children, value) so
prediction can descend vectorized over whole query batches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    min_samples_split: int = 2
    max_features: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if not (0.0 < self.max_features <= 1.0):
            raise ForestError("max_features must be in (0, 1]")
        if self.min_samples_split < 2:
            raise ForestError("min_samples_split must be >= 2")


class _Tree:
    """Flat-array binary tree. feature == -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "count")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.count: list[int] = []

    def add_node(self, feature, threshold, value, count) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.count.append(count)
        return len(self.feature) - 1

    def freeze(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.count = np.asarray(self.count, dtype=np.int64)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]


def _best_split(X: np.ndarray, y: np.ndarray, feat_subset: np.ndarray,
                rng: np.random.Generator):
    """One random threshold per candidate feature; pick max variance reduction.

    Returns (feature, threshold, left_mask) or None if every split is
    degenerate. Ties break on lowest feature index, then lowest threshold.
    """
    sub = X[:, feat_subset]
    lo = sub.min(axis=0)
    hi = sub.max(axis=0)
    valid = hi > lo
    if not np.any(valid):
        return None
    thresholds = rng.uniform(lo, hi)
    left = sub <= thresholds  # (n, k)
    n = y.shape[0]
    nl = left.sum(axis=0)
    nr = n - nl
    ok = valid & (nl > 0) & (nr > 0)
    if not np.any(ok):
        return None
    sum_l = left.T.astype(np.float64) @ y
    sum_all = y.sum()
    sum_r = sum_all - sum_l
    # Variance reduction up to a shared constant: maximize within-child
    # (sum^2 / n) total.
    with np.errstate(divide="ignore", invalid="ignore"):
        score = sum_l * sum_l / nl + sum_r * sum_r / nr
    score[~ok] = -np.inf
    best = score.max()
    cand = np.nonzero(score >= best - 1e-12 * max(1.0, abs(best)))[0]
    if cand.size > 1:
        order = np.lexsort((thresholds[cand], feat_subset[cand]))
        pick = cand[order[0]]
    else:
        pick = cand[0]
    return int(feat_subset[pick]), float(thresholds[pick]), left[:, pick]


def _build_tree(X: np.ndarray, y: np.ndarray, config: ForestConfig,
                rng: np.random.Generator) -> _Tree:
    n, d = X.shape
    k = max(1, math.ceil(config.max_features * d))
    tree = _Tree()
    root = tree.add_node(-1, 0.0, float(y.mean()), n)
    stack = [(root, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        ysub = y[idx]
        if idx.size < config.min_samples_split or np.ptp(ysub) == 0.0:
            continue
        feat_subset = np.sort(rng.permutation(d)[:k]) if k < d else np.arange(d)
        split = _best_split(X[idx], ysub, feat_subset, rng)
        if split is None:
            continue
        feature, threshold, left_mask = split
        li = idx[left_mask]
        ri = idx[~left_mask]
        tree.feature[node] = feature
        tree.threshold[node] = threshold
        lnode = tree.add_node(-1, 0.0, float(y[li].mean()), li.size)
        rnode = tree.add_node(-1, 0.0, float(y[ri].mean()), ri.size)
        tree.left[node] = lnode
        tree.right[node] = rnode
        stack.append((lnode, li))
        stack.append((rnode, ri))
    tree.freeze()
    return tree


class Forest:
    """Fitted ensemble; see fit()."""

    def __init__(self, trees: list[_Tree], n_features: int, y_min: float,
                 y_max: float, config: ForestConfig):
        self.trees = trees
        self.n_features = n_features
        self.y_min = y_min
        self.y_max = y_max
        self.config = config

    def predict_all(self, X: np.ndarray) -> np.ndarray:
        """Per-tree predictions, shape (n_trees, n_queries)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ForestError(
                f"query has {X.shape[1]} features, forest expects {self.n_features}")
        return np.stack([t.predict(X) for t in self.trees])

    def predict_mean_std(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and population std across trees; scalars for a single query."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        preds = self.predict_all(x)
        mu = preds.mean(axis=0)
        sigma = preds.std(axis=0)
        if single:
            return float(mu[0]), float(sigma[0])
        return mu, sigma


def fit(X: np.ndarray, y: np.ndarray, config: ForestConfig = ForestConfig()) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ForestError("cannot fit on an empty sample")
    if X.shape[0] != y.shape[0]:
        raise ForestError("X and y row counts differ")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ForestError("non-finite values in training data")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = [_build_tree(X, y, config, np.random.default_rng(s)) for s in seeds]
    return Forest(trees, X.shape[1], float(y.min()), float(y.max()), config)
