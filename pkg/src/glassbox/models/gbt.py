"""Gradient-boosted trees for binary classification under logistic loss."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import expit

from ._kernels import MAX_BINS, complete_layout, predict_complete
from .tree import Binner, Tree, TrainingError, _rank_gains, grow_tree

FORMAT = "glassbox-gbt"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    subsample: float = 1.0
    subsample_seed: int = 0
    reg_lambda: float = 1.0
    max_bins: int = MAX_BINS


@dataclass(frozen=True, eq=False)
class GbtModel:
    """Boosted ensemble. Leaf values are stored already scaled by the
    learning rate, so the margin is ``base_score + sum(tree outputs)``."""

    trees: tuple[Tree, ...]
    learning_rate: float
    base_score: float
    feature_names: tuple[str, ...]
    config: GbtConfig = field(default_factory=GbtConfig)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = len(self.feature_names)
        for t in self.trees:
            if (t.feature >= p).any():
                raise ValueError("split feature index out of range")
            if not np.isfinite(t.value).all():
                raise ValueError("non-finite leaf value")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @cached_property
    def _complete(self):
        depth = max((t.depth for t in self.trees), default=0)
        return (*complete_layout(self.trees, depth), depth)

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not self.trees:
            return np.full(X.shape[0], self.base_score)
        return self.base_score + predict_complete(np.ascontiguousarray(X), *self._complete)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.predict_margin(X))

    __call__ = predict_proba

    def gain_importance(self) -> list[tuple[str, float]]:
        return gain_importance(self)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a glassbox GBT model document (or unsupported version)")
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            learning_rate=float(d["learning_rate"]),
            base_score=float(d["base_score"]),
            feature_names=tuple(d["feature_names"]),
            config=GbtConfig(**d["config"]),
            meta=d.get("meta", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)

    @classmethod
    def loads(cls, text: str) -> "GbtModel":
        return cls.from_dict(json.loads(text))


def _leaf_line_search(margin, y, rows, reg_lambda, max_iter=50):
    """Minimise sum logloss(margin + v) + reg_lambda/2 * v^2 over the leaf rows."""
    m = margin[rows]
    t = y[rows]

    def loss(v):
        z = m + v
        return float(np.sum(np.logaddexp(0.0, z) - t * z) + 0.5 * reg_lambda * v * v)

    v = 0.0
    f = loss(v)
    for _ in range(max_iter):
        p = expit(m + v)
        grad = float(np.sum(p - t)) + reg_lambda * v
        hess = float(np.sum(p * (1.0 - p))) + reg_lambda
        step = -grad / hess
        while True:
            f_new = loss(v + step)
            if f_new <= f or abs(step) < 1e-14:
                break
            step *= 0.5
        v += step
        f = f_new
        if abs(step) <= 1e-12 * (1.0 + abs(v)):
            break
    return v


def logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def train_gbt(X: np.ndarray, y: np.ndarray, config: GbtConfig = GbtConfig(), feature_names=None) -> GbtModel:
    """Fit a boosted ensemble; each tree fits the negative logistic-loss
    gradient and its leaves are set by a regularised Newton line search."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("training matrix must be non-empty and 2-D")
    if not np.isfinite(X).all():
        raise TrainingError("non-finite feature values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise TrainingError("labels must be 0/1")
    prevalence = y.mean()
    if prevalence in (0.0, 1.0):
        raise TrainingError("labels contain a single class")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    base = float(math.log(prevalence / (1.0 - prevalence)))

    binner = Binner(config.max_bins).fit(X)
    codes = binner.transform(X)
    n = X.shape[0]
    margin = np.full(n, base)
    rng = np.random.default_rng(config.subsample_seed)
    all_rows = np.arange(n)
    trees = []
    for _ in range(config.n_trees):
        p = expit(margin)
        grad = y - p
        hess = p * (1.0 - p)
        if config.subsample < 1.0:
            k = max(1, math.ceil(config.subsample * n))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        else:
            rows = all_rows
        tree = grow_tree(
            codes,
            binner.cuts,
            rows,
            grad,
            hess,
            leaf_value=lambda r: config.learning_rate * _leaf_line_search(margin, y, r, config.reg_lambda),
            max_depth=config.max_depth,
            min_samples_leaf=1,
            min_hess=config.min_child_weight,
        )
        trees.append(tree)
        margin = margin + tree.predict(X)
    return GbtModel(tuple(trees), config.learning_rate, base, names, config)


def gain_importance(model: GbtModel) -> list[tuple[str, float]]:
    """Total split gain per feature, normalised to sum to one, descending."""
    if not model.trees:
        raise ValueError("model has no trees")
    feats = np.concatenate([t.feature for t in model.trees])
    gains = np.concatenate([t.gain for t in model.trees])
    return _rank_gains(feats, gains, model.feature_names)
