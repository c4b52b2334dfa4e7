"""Histogram-based binary regression trees and the CART decision tree."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from ._kernels import MAX_BINS, complete_layout, node_histogram, predict_complete


class TrainingError(ValueError):
    pass


class Binner:
    """Maps each feature onto at most ``MAX_BINS`` ordered codes.

    Code ``k`` holds values in ``(cuts[k-1], cuts[k]]``, so the split
    "code <= k" is the same as the raw-value test ``x <= cuts[k]``. Cuts sit
    midway between adjacent training values, so inputs that fall between
    observed values (perturbed rows) are routed to the nearer side.
    """

    def __init__(self, max_bins: int = MAX_BINS):
        if not 2 <= max_bins <= MAX_BINS:
            raise ValueError(f"max_bins must be in [2, {MAX_BINS}]")
        self.max_bins = max_bins
        self.cuts: list[np.ndarray] = []

    def fit(self, X: np.ndarray) -> "Binner":
        self.cuts = []
        for j in range(X.shape[1]):
            uniq = np.unique(X[:, j])
            if len(uniq) <= self.max_bins:
                k = np.arange(len(uniq) - 1)
            else:
                qs = np.linspace(0, 1, self.max_bins + 1)[1:-1]
                upper = np.unique(np.quantile(X[:, j], qs, method="inverted_cdf"))
                k = np.searchsorted(uniq, upper[upper < uniq[-1]])
            self.cuts.append(0.5 * (uniq[k] + uniq[k + 1]))
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        codes = np.empty(X.shape, dtype=np.uint8)
        for j, cuts in enumerate(self.cuts):
            codes[:, j] = np.searchsorted(cuts, X[:, j], side="left")
        return codes

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(c) + 1 for c in self.cuts])


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[k] + 1
                depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @cached_property
    def _complete(self):
        depth = self.depth
        return (*complete_layout([self], depth), depth)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return predict_complete(X, *self._complete)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.n_nodes):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return node

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=float),
            gain=np.asarray(d["gain"], dtype=float),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
        )

    @classmethod
    def leaf(cls, value: float, n_samples: int = 0) -> "Tree":
        return cls(
            np.array([-1], dtype=np.int32),
            np.zeros(1),
            np.array([-1], dtype=np.int32),
            np.array([-1], dtype=np.int32),
            np.array([float(value)]),
            np.zeros(1),
            np.array([n_samples]),
        )


def _best_split(hist, n_bins, min_samples_leaf, min_hess):
    cnt, tsum, hsum = hist
    cl = np.cumsum(cnt, axis=1)
    sl = np.cumsum(tsum, axis=1)
    hl = np.cumsum(hsum, axis=1)
    n, s, h = cl[0, -1], sl[0, -1], hl[0, -1]
    cr, sr, hr = n - cl, s - sl, h - hl
    valid = (cl >= min_samples_leaf) & (cr >= min_samples_leaf)
    valid &= (hl >= min_hess) & (hr >= min_hess)
    valid &= np.arange(MAX_BINS)[None, :] < (n_bins[:, None] - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = sl**2 / cl + sr**2 / cr - s**2 / n
    gain = np.where(valid, gain, -np.inf)
    k = int(np.argmax(gain))
    j, b = divmod(k, MAX_BINS)
    return j, b, float(gain[j, b])


def grow_tree(
    codes: np.ndarray,
    cuts: list[np.ndarray],
    rows: np.ndarray,
    target: np.ndarray,
    hess: np.ndarray,
    leaf_value: Callable[[np.ndarray], float],
    max_depth: int,
    min_samples_leaf: int = 1,
    min_hess: float = 0.0,
    allow_zero_gain: bool = False,
) -> Tree:
    """Greedy least-squares tree on ``target`` restricted to ``rows``.

    Split gain is the reduction in squared error of ``target``; for 0/1
    targets this is half the Gini impurity decrease, so the same search
    serves classification. ``allow_zero_gain`` keeps splitting impure nodes
    whose best split gains nothing (needed for XOR-like targets).
    """
    n_bins = np.array([len(c) + 1 for c in cuts])
    nodes: list[list] = []

    def build(node_rows: np.ndarray, depth: int) -> int:
        k = len(nodes)
        nodes.append([-1, 0.0, -1, -1, 0.0, 0.0, len(node_rows)])
        t = target[node_rows]
        sse = float(np.sum((t - t.mean()) ** 2))
        split = None
        if depth < max_depth and len(node_rows) >= 2 * min_samples_leaf and sse > 1e-14 * (float(t @ t) + 1e-300):
            hist = node_histogram(codes, node_rows, target, hess)
            j, b, gain = _best_split(hist, n_bins, min_samples_leaf, min_hess)
            floor = -1e-12 * sse if allow_zero_gain else 1e-12 * sse
            if np.isfinite(gain) and gain > floor:
                split = (j, b, gain)
        if split is None:
            nodes[k][4] = float(leaf_value(node_rows))
            return k
        j, b, gain = split
        go_left = codes[node_rows, j] <= b
        nodes[k][0] = j
        nodes[k][1] = float(cuts[j][b])
        nodes[k][5] = gain
        nodes[k][2] = build(node_rows[go_left], depth + 1)
        nodes[k][3] = build(node_rows[~go_left], depth + 1)
        return k

    build(np.asarray(rows, dtype=np.int64), 0)
    cols = list(zip(*nodes))
    return Tree(
        feature=np.array(cols[0], dtype=np.int32),
        threshold=np.array(cols[1], dtype=float),
        left=np.array(cols[2], dtype=np.int32),
        right=np.array(cols[3], dtype=np.int32),
        value=np.array(cols[4], dtype=float),
        gain=np.array(cols[5], dtype=float),
        n_samples=np.array(cols[6], dtype=np.int64),
    )


@dataclass(frozen=True, eq=False)
class TreeModel:
    """Single CART tree. ``mode`` is "classification" (leaf = positive rate)
    or "regression" (leaf = mean target)."""

    tree: Tree
    max_depth: int
    min_samples_leaf: int
    mode: str
    feature_names: tuple[str, ...] = ()

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict(X)

    __call__ = predict

    def feature_importance(self) -> list[tuple[str, float]]:
        names = self.feature_names or tuple(f"x{j}" for j in range(int(self.tree.feature.max()) + 1))
        return _rank_gains(self.tree.feature, self.tree.gain, names)

    def render(self, precision: int = 3) -> str:
        """Indented text rendering of the split rules."""
        t = self.tree
        names = self.feature_names
        lines: list[str] = []

        def walk(k: int, indent: int):
            pad = "|   " * indent
            if t.feature[k] < 0:
                lines.append(f"{pad}value: {t.value[k]:.{precision}f} (n={t.n_samples[k]})")
                return
            name = names[t.feature[k]] if names else f"x{t.feature[k]}"
            thr = f"{t.threshold[k]:.{precision}f}"
            lines.append(f"{pad}{name} <= {thr}")
            walk(int(t.left[k]), indent + 1)
            lines.append(f"{pad}{name} >  {thr}")
            walk(int(t.right[k]), indent + 1)

        walk(0, 0)
        return "\n".join(lines) + "\n"


def _rank_gains(features, gains, names) -> list[tuple[str, float]]:
    total = np.zeros(len(names))
    inner = features >= 0
    np.add.at(total, features[inner], gains[inner])
    s = total.sum()
    if s > 0:
        total = total / s
    return sorted(zip(names, total.tolist()), key=lambda kv: (-kv[1], kv[0]))


def train_decision_tree(
    X: np.ndarray,
    targets: np.ndarray,
    max_depth: int = 6,
    min_samples_leaf: int = 1,
    feature_names: tuple[str, ...] = (),
    max_bins: int = MAX_BINS,
) -> TreeModel:
    """Greedy CART. 0/1 targets are split by Gini, anything else in [0, 1] by variance."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("X must be a non-empty 2-D matrix")
    if y.shape != (X.shape[0],):
        raise TrainingError("targets must have one entry per row")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise TrainingError("non-finite input")
    mode = "classification" if np.isin(y, (0.0, 1.0)).all() else "regression"
    binner = Binner(max_bins).fit(X)
    codes = binner.transform(X)
    tree = grow_tree(
        codes,
        binner.cuts,
        np.arange(X.shape[0]),
        y,
        np.ones_like(y),
        leaf_value=lambda rows: y[rows].mean(),
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        allow_zero_gain=True,
    )
    if mode == "classification":
        tree = Tree(tree.feature, tree.threshold, tree.left, tree.right, tree.value, 2.0 * tree.gain, tree.n_samples)
    return TreeModel(tree, max_depth, min_samples_leaf, mode, tuple(feature_names))
