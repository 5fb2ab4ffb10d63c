"""Random forest of Gini-split decision trees, built from scratch.

Trees are stored as flat node arrays. A fitted forest is additionally packed
into padded ``(n_trees, max_nodes)`` arrays so prediction walks every tree at
once with a handful of numpy calls per level.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .numcore import Rng

LEAF = -1
FORMAT_VERSION = 1
THREADS_ENV = "ADVFORENSICS_THREADS"


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters; defaults follow scikit-learn's classifier.

    ``max_features`` is ``"sqrt"`` (ceil of sqrt(d)), ``None`` / ``"all"`` for
    every feature, or an int. ``class_weight="balanced"`` weights each class by
    ``n / (class_count * n_class)`` in the split criterion and leaf histograms.
    """

    tree_count: int = 100
    max_features: str | int | None = "sqrt"
    min_samples_split: int = 2
    max_depth: int | None = None
    bootstrap: bool = True
    class_weight: str | None = None

    def __post_init__(self):
        if self.class_weight not in (None, "balanced"):
            raise ValueError(f"unknown class_weight {self.class_weight!r}")
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "all"):
            raise ValueError(f"unknown max_features rule {self.max_features!r}")

    def n_features(self, d: int) -> int:
        if self.max_features in (None, "all"):
            return d
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(d, int(self.max_features)))

    def to_dict(self) -> dict:
        return {
            "tree_count": self.tree_count,
            "max_features": self.max_features,
            "min_samples_split": self.min_samples_split,
            "max_depth": self.max_depth,
            "bootstrap": self.bootstrap,
            "class_weight": self.class_weight,
        }


@dataclass
class Tree:
    """Flat binary tree. Leaves have ``feature == -1`` and point at themselves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, class_count) (weighted) training histogram per node

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, x) -> int:
        """Index of the leaf reached by ``x``."""
        node = 0
        while self.feature[node] != LEAF:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return node

    def predict_proba(self, x) -> np.ndarray:
        c = self.counts[self.apply(x)]
        return c / c.sum()

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.node_count):
            if self.feature[i] == LEAF:
                nodes.append({"counts": self.counts[i].tolist()})
            else:
                nodes.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
        return {"nodes": nodes}


def gini_split_score(left_counts, right_counts) -> np.ndarray:
    """``n * weighted Gini`` of a split, from class-count rows.

    ``n_L - sum(c_L^2)/n_L + n_R - sum(c_R^2)/n_R``; minimising it is the same
    as minimising the sample-weighted Gini impurity of the children.
    """
    left_counts = np.asarray(left_counts, dtype=np.float64)
    right_counts = np.asarray(right_counts, dtype=np.float64)
    nl = left_counts.sum(axis=-1)
    nr = right_counts.sum(axis=-1)
    return (nl - (left_counts ** 2).sum(axis=-1) / nl) + (nr - (right_counts ** 2).sum(axis=-1) / nr)


def midpoint(lo: float, hi: float) -> float:
    t = (lo + hi) / 2.0
    # adjacent floats: the midpoint can round up onto hi and break the split
    if t >= hi:
        t = lo
    return t


def best_split(X: np.ndarray, onehot: np.ndarray, features) -> tuple[int, float, float] | None:
    """Minimal-Gini ``(feature, threshold, score)`` over the given features.

    Candidates are midpoints between consecutive distinct values. Ties go to
    the lower feature index, then the lower threshold. Returns ``None`` when
    every candidate feature is constant.
    """
    total = onehot.sum(axis=0)
    # Scores are O(n) and carry a few ulps of rounding, so mathematically equal
    # splits can differ in the last bits. Distinct splits of integer counts differ
    # by at least 1/(n_L * n_R) >= 4/n^2, far above this tolerance for any node
    # below ~1e5 samples, so ties are decided by index rather than by rounding.
    tol = 16 * np.finfo(np.float64).eps * max(float(total.sum()), 1.0)
    best = None
    for f in sorted(features):
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        valid = np.nonzero(xs[:-1] < xs[1:])[0]
        if valid.size == 0:
            continue
        cum = np.cumsum(onehot[order], axis=0)
        left = cum[valid]
        scores = gini_split_score(left, total - left)
        j = int(np.argmax(scores <= scores.min() + tol))
        if best is None or scores[j] < best[2] - tol:
            i = valid[j]
            best = (f, midpoint(xs[i], xs[i + 1]), float(scores[j]))
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, class_count: int, params: ForestParams, rng: Rng,
             class_weights: np.ndarray | None = None) -> Tree:
    n, d = X.shape
    k = params.n_features(d)
    onehot = np.eye(class_count)[y]
    if class_weights is not None:
        onehot = onehot * class_weights
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(len(left))
        right.append(len(right))
        counts.append(onehot[idx].sum(axis=0))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        if (
            len(idx) < params.min_samples_split
            or np.count_nonzero(c) <= 1
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue
        perm = rng.permutation(d)
        split = best_split(X[idx], onehot[idx], perm[:k])
        if split is None and k < d:
            # all sampled features constant here: keep drawing, as scikit-learn does
            split = best_split(X[idx], onehot[idx], perm[k:])
        if split is None:
            continue
        f, t, _ = split
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(counts, dtype=np.float64).reshape(-1, class_count),
    )


@dataclass
class ForestModel:
    trees: list[Tree]
    class_count: int
    feature_count: int
    params: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        self._pack()

    def _pack(self):
        t, m = len(self.trees), max(tr.node_count for tr in self.trees)
        self._feature = np.zeros((t, m), dtype=np.int64)
        self._threshold = np.zeros((t, m))
        self._left = np.zeros((t, m), dtype=np.int64)
        self._right = np.zeros((t, m), dtype=np.int64)
        self._proba = np.zeros((t, m, self.class_count))
        for i, tr in enumerate(self.trees):
            k = tr.node_count
            leaf = tr.feature == LEAF
            # leaves test feature 0 against +inf and loop back to themselves
            self._feature[i, :k] = np.where(leaf, 0, tr.feature)
            self._threshold[i, :k] = np.where(leaf, np.inf, tr.threshold)
            self._left[i, :k] = tr.left
            self._right[i, :k] = tr.right
            sums = tr.counts.sum(axis=1, keepdims=True)
            self._proba[i, :k] = np.divide(tr.counts, sums, out=np.zeros_like(tr.counts), where=sums > 0)
        self._depth = max(tr.depth() for tr in self.trees)
        self._rows = np.arange(t)

    def predict_proba(self, x) -> np.ndarray:
        """Mean of per-tree leaf class proportions for one input."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.feature_count,):
            raise ValueError(f"expected {self.feature_count} features, got shape {x.shape}")
        rows = self._rows
        node = np.zeros(len(self.trees), dtype=np.int64)
        for _ in range(self._depth):
            go_left = x[self._feature[rows, node]] <= self._threshold[rows, node]
            node = np.where(go_left, self._left[rows, node], self._right[rows, node])
        return self._proba[rows, node].mean(axis=0)

    def predict_proba_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise ValueError(f"expected rows of {self.feature_count} features, got shape {X.shape}")
        rows = self._rows[:, None]
        cols = np.arange(len(X))[None, :]
        node = np.zeros((len(self.trees), len(X)), dtype=np.int64)
        for _ in range(self._depth):
            go_left = X[cols, self._feature[rows, node]] <= self._threshold[rows, node]
            node = np.where(go_left, self._left[rows, node], self._right[rows, node])
        return self._proba[rows, node].mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "class_count": self.class_count,
            "feature_count": self.feature_count,
            "params": self.params.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {d.get('format_version')!r}")
        C = d["class_count"]
        trees = []
        for td in d["trees"]:
            nodes = td["nodes"]
            n = len(nodes)
            feature = np.full(n, LEAF, dtype=np.int64)
            threshold = np.zeros(n)
            left = np.arange(n, dtype=np.int64)
            right = np.arange(n, dtype=np.int64)
            counts = np.zeros((n, C))
            for i, nd in enumerate(nodes):
                if "counts" in nd:
                    counts[i] = nd["counts"]
                else:
                    feature[i], threshold[i] = nd["feature"], nd["threshold"]
                    left[i], right[i] = nd["left"], nd["right"]
            # internal histograms are the sum of their leaves
            for i in range(n - 1, -1, -1):
                if feature[i] != LEAF:
                    counts[i] = counts[left[i]] + counts[right[i]]
            trees.append(Tree(feature, threshold, left, right, counts))
        return cls(trees, C, d["feature_count"], ForestParams(**d["params"]))

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        return cls.from_dict(json.loads(text))


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def fit_forest(features, labels, params: ForestParams | None = None, rng: Rng | None = None,
               class_count: int | None = None) -> ForestModel:
    """Fit ``params.tree_count`` trees, each on its own bootstrap resample.

    Tree ``i`` draws from ``rng.child(i)``, so the forest is identical
    whatever the thread count (``ADVFORENSICS_THREADS``).
    """
    params = params or ForestParams()
    rng = rng or Rng(0)
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("cannot fit a forest on empty data")
    if len(y) != len(X):
        raise ValueError("features and labels differ in length")
    C = class_count if class_count is not None else int(y.max()) + 1
    if y.min() < 0 or y.max() >= C:
        raise ValueError("labels out of range")

    weights = None
    if params.class_weight == "balanced":
        freq = np.bincount(y, minlength=C).astype(np.float64)
        weights = np.divide(len(y), C * freq, out=np.zeros(C), where=freq > 0)

    def one(i):
        r = rng.child(i)
        if params.bootstrap:
            idx = r.integers(0, len(X), size=len(X))
            return fit_tree(X[idx], y[idx], C, params, r, weights)
        return fit_tree(X, y, C, params, r, weights)

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(one, range(params.tree_count)))
    else:
        trees = [one(i) for i in range(params.tree_count)]
    return ForestModel(trees, C, X.shape[1], params)


def predict_forest(f: ForestModel, x) -> int:
    # argmax picks the lowest class index on ties
    return int(np.argmax(f.predict_proba(x)))


def predict_forest_batch(f: ForestModel, X) -> np.ndarray:
    return np.argmax(f.predict_proba_batch(X), axis=1)


def latency_probe(f: ForestModel, batch, repetitions: int = 10_000) -> float:
    """Mean wall time in seconds of one :func:`predict_forest` call.

    Cycles through ``batch`` until ``repetitions`` single-sample predictions
    have been timed.
    """
    batch = [np.asarray(x, dtype=np.float64) for x in batch]
    if not batch:
        raise ValueError("latency_probe needs a non-empty batch")
    reps = max(repetitions, len(batch))
    n = len(batch)
    start = time.perf_counter()
    for i in range(reps):
        predict_forest(f, batch[i % n])
    return (time.perf_counter() - start) / reps
