"""Global explanations: permutation importance, global surrogates and submodular pick."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._seeding import derived_rng
from .data import EncodedDataset
from .models import MetricReport, auc, classification_metrics, r2_score, train_decision_tree, train_logistic


@dataclass(frozen=True)
class PermutationReport:
    baseline_auc: float
    repeats: int
    seed: int
    features: tuple[tuple[str, float, float], ...]  # (name, mean drop, stddev), descending

    @property
    def ranking(self) -> list[str]:
        return [f for f, _, _ in self.features]

    def drop(self, name: str) -> float:
        for f, m, _ in self.features:
            if f == name:
                return m
        raise KeyError(name)


def default_groups(data: EncodedDataset) -> list[tuple[str, tuple[int, ...]]]:
    """One entry per source attribute; single-column groups use the column name."""
    if not data.groups:
        return [(n, (j,)) for j, n in enumerate(data.feature_names)]
    return [
        (g.name if len(g.columns) > 1 else data.feature_names[g.columns[0]], tuple(g.columns))
        for g in data.groups
    ]


def permutation_importance(
    predictor: Callable,
    data: EncodedDataset,
    repeats: int = 5,
    seed: int = 0,
    groups: Sequence[tuple[str, Sequence[int]]] | None = None,
    threads: int = 1,
) -> PermutationReport:
    """Mean AUC drop when each column group is shuffled across rows.

    One-hot groups move as a unit so every permuted row stays a valid
    encoding. Each (group, repeat) draws from its own derived stream, so the
    result does not depend on ``threads``.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    X = data.matrix
    y = data.labels
    if len(np.unique(y)) < 2:
        raise ValueError("permutation importance needs both classes")
    groups = default_groups(data) if groups is None else [(n, tuple(c)) for n, c in groups]
    baseline = auc(predictor(X), y)

    def one(task):
        g, r = task
        cols = list(groups[g][1])
        perm = derived_rng(seed, g, r).permutation(len(X))
        Xp = X.copy()
        Xp[:, cols] = X[perm][:, cols]
        return baseline - auc(predictor(Xp), y)

    tasks = [(g, r) for g in range(len(groups)) for r in range(repeats)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            drops = list(pool.map(one, tasks))
    else:
        drops = [one(t) for t in tasks]
    drops = np.array(drops).reshape(len(groups), repeats)
    rows = [(groups[g][0], float(drops[g].mean()), float(drops[g].std())) for g in range(len(groups))]
    rows.sort(key=lambda t: (-t[1], t[0]))
    return PermutationReport(float(baseline), repeats, seed, tuple(rows))


@dataclass(frozen=True)
class SurrogateReport:
    kind: str
    r2_train: float
    r2_test: float
    metrics_train: MetricReport
    metrics_test: MetricReport
    importance: tuple[tuple[str, float], ...] = ()
    rendering: str = ""

    __json_extra__ = ("accepted",)

    @property
    def accepted(self) -> bool:
        # A surrogate that does worse than predicting the mean is rejected.
        return self.r2_train > 0 and self.r2_test > 0


def fit_global_surrogate(
    predictor: Callable,
    train: EncodedDataset,
    test: EncodedDataset,
    kind: str | Callable = "tree",
    max_depth: int = 4,
    l2: float = 1e-4,
) -> SurrogateReport:
    """Fit an interpretable model to the predictor's probabilities on ``train``.

    ``kind`` is "tree", "logistic", or a callable ``fit(X, targets) -> model``
    for custom surrogates.
    """
    target_train = np.asarray(predictor(train.matrix), dtype=float)
    target_test = np.asarray(predictor(test.matrix), dtype=float)
    importance: list[tuple[str, float]] = []
    rendering = ""
    if kind == "tree":
        model = train_decision_tree(train.matrix, target_train, max_depth=max_depth, feature_names=train.feature_names)
        importance = model.feature_importance()
        rendering = model.render()
    elif kind == "logistic":
        model = train_logistic(train.matrix, target_train, l2=l2, feature_names=train.feature_names)
        w = np.abs(model.weights * train.matrix.std(axis=0))
        importance = sorted(zip(train.feature_names, (w / w.sum()).tolist()), key=lambda kv: (-kv[1], kv[0]))
    elif callable(kind):
        model = kind(train.matrix, target_train)
        kind = getattr(kind, "__name__", "custom")
    else:
        raise ValueError(f"unknown surrogate kind {kind!r}")
    fit_train = np.asarray(model(train.matrix), dtype=float)
    fit_test = np.asarray(model(test.matrix), dtype=float)
    return SurrogateReport(
        kind=str(kind),
        r2_train=r2_score(target_train, fit_train),
        r2_test=r2_score(target_test, fit_test),
        metrics_train=classification_metrics(fit_train, train.labels),
        metrics_test=classification_metrics(fit_test, test.labels),
        importance=tuple(importance),
        rendering=rendering,
    )


@dataclass(frozen=True)
class PickResult:
    selected: tuple[int, ...]
    coverage: float
    budget: int
    coverage_path: tuple[float, ...] = ()


def pick_importance(W: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(W).sum(axis=0))


def coverage(W: np.ndarray, subset: Sequence[int], importance: np.ndarray | None = None) -> float:
    I = pick_importance(W) if importance is None else importance
    if len(subset) == 0:
        return 0.0
    hit = (np.abs(W[list(subset)]) > 0).any(axis=0)
    return float(I @ hit)


def _check(W, budget):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("W must be 2-D")
    if not np.isfinite(W).all():
        raise ValueError("W must be finite")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    return W


def sp_lime(W: np.ndarray, budget: int) -> PickResult:
    """Greedy maximisation of weighted feature coverage."""
    W = _check(W, budget)
    I = pick_importance(W)
    nz = np.abs(W) > 0
    covered = np.zeros(W.shape[1], dtype=bool)
    selected: list[int] = []
    path: list[float] = []
    total = 0.0
    for _ in range(min(budget, W.shape[0])):
        gains = (nz & ~covered) @ I
        if selected:
            gains[selected] = -1.0
        i = int(np.argmax(gains))
        if gains[i] <= 0:
            break
        selected.append(i)
        covered |= nz[i]
        total = float(I @ covered)
        path.append(total)
    return PickResult(tuple(selected), total, budget, tuple(path))


MAX_EXACT_SUBSETS = 10**6


def sp_lime_exact(W: np.ndarray, budget: int) -> PickResult:
    """Exhaustive optimum of the same coverage; ties prefer fewer instances,
    then the lexicographically smallest id tuple."""
    W = _check(W, budget)
    n = W.shape[0]
    k = min(budget, n)
    if math.comb(n, k) > MAX_EXACT_SUBSETS:
        raise ValueError(f"C({n}, {k}) subsets exceeds the exhaustive limit")
    I = pick_importance(W)
    nz = np.abs(W) > 0
    best, best_cov = (), 0.0
    for size in range(1, k + 1):
        for sub in itertools.combinations(range(n), size):
            c = float(I @ nz[list(sub)].any(axis=0))
            if c > best_cov:
                best, best_cov = sub, c
    path = tuple(coverage(W, best[: m + 1], I) for m in range(len(best)))
    return PickResult(tuple(best), best_cov, budget, path)
