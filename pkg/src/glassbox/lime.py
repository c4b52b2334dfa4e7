"""Local surrogate explanations on a kernel-weighted perturbation neighbourhood."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ._seeding import derived_rng
from .data import EncodedDataset, FeatureGroup


class LimeError(ValueError):
    pass


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # None: 0.75 * sqrt(n_features)
    top_k: int = 6
    seed: int | None = None
    ridge_alpha: float = 1.0

    def __post_init__(self):
        if self.n_samples < 10:
            raise ValueError("n_samples must be at least 10")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")


class TabularSampler:
    """Training-set statistics used to perturb encoded rows.

    Numeric columns are jittered around the instance with the training
    standard deviation; one-hot groups and binary indicators are redrawn
    from their training marginals.
    """

    def __init__(self, data: EncodedDataset, n_bins: int = 4):
        X = data.matrix
        self.feature_names = data.feature_names
        self.n_features = X.shape[1]
        self.groups: tuple[FeatureGroup, ...] = data.groups or tuple(
            FeatureGroup(n, (j,), "numeric") for j, n in enumerate(data.feature_names)
        )
        self.numeric = np.array([g.columns[0] for g in self.groups if g.kind == "numeric"], dtype=int)
        # constant columns are never perturbed but still need a finite distance unit
        self.noise = X[:, self.numeric].std(axis=0)
        self.scale = np.where(self.noise > 0, self.noise, 1.0)
        qs = np.linspace(0, 1, n_bins + 1)[1:-1]
        self.edges = [np.unique(np.quantile(X[:, j], qs)) for j in self.numeric]
        self.categorical: list[tuple[np.ndarray, np.ndarray]] = []
        for g in self.groups:
            cols = np.array(g.columns)
            if g.kind == "onehot":
                counts = X[:, cols].sum(axis=0)
                self.categorical.append((cols, counts / counts.sum()))
            elif g.kind == "binary":
                p1 = X[:, cols[0]].mean()
                self.categorical.append((cols, np.array([1.0 - p1, p1])))

    def sample(self, instance: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        rows = np.repeat(np.asarray(instance, dtype=float)[None, :], n, axis=0)
        rows[:, self.numeric] += rng.standard_normal((n, len(self.numeric))) * self.noise
        for cols, probs in self.categorical:
            draw = rng.choice(len(probs), size=n, p=probs)
            if len(cols) == 1:
                rows[:, cols[0]] = draw.astype(float)
            else:
                block = np.zeros((n, len(cols)))
                block[np.arange(n), draw] = 1.0
                rows[:, cols] = block
        return rows

    def representation(self, rows: np.ndarray, instance: np.ndarray) -> np.ndarray:
        """Binary interpretable view: 1 where a feature matches the instance
        (numeric features: same training-quantile bin)."""
        z = (rows == instance[None, :]).astype(float)
        for k, j in enumerate(self.numeric):
            e = self.edges[k]
            z[:, j] = np.searchsorted(e, rows[:, j]) == np.searchsorted(e, instance[j])
        return z

    def distances(self, rows: np.ndarray, instance: np.ndarray) -> np.ndarray:
        """Euclidean distance with numeric features in training-std units and
        each categorical group contributing 1 when it differs."""
        d2 = np.sum(((rows[:, self.numeric] - instance[self.numeric]) / self.scale) ** 2, axis=1)
        for cols, _ in self.categorical:
            d2 += (rows[:, cols] != instance[cols]).any(axis=1)
        return np.sqrt(d2)


def sample_neighborhood(instance, sampler: TabularSampler, n: int, seed: int | None):
    """(perturbed rows, interpretable representation, distances)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.asarray(instance, dtype=float)
    rows = sampler.sample(x, n, derived_rng(seed))
    return rows, sampler.representation(rows, x), sampler.distances(rows, x)


def kernel_weights(distances: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-(distances**2) / width**2)


def weighted_ridge(X: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float):
    """Minimise sum w (y - b - X beta)^2 + alpha |beta|^2; intercept unpenalised."""
    sw = w.sum()
    xm = w @ X / sw
    ym = w @ y / sw
    Xc = X - xm
    yc = y - ym
    G = (Xc * w[:, None]).T @ Xc
    beta = np.linalg.solve(G + alpha * np.eye(X.shape[1]), (Xc * w[:, None]).T @ yc)
    return beta, float(ym - xm @ beta)


def ridge_objective(beta, b, X, y, w, alpha) -> float:
    r = y - b - X @ beta
    return float(np.sum(w * r * r) + alpha * np.sum(beta * beta))


def weighted_r2(y, fitted, w) -> float:
    ym = w @ y / w.sum()
    sst = float(w @ (y - ym) ** 2)
    if sst <= 0:
        return 0.0
    return 1.0 - float(w @ (y - fitted) ** 2) / sst


def forward_select(Z: np.ndarray, y: np.ndarray, w: np.ndarray, k: int, alpha: float) -> list[int]:
    """Greedy forward selection maximising weighted ridge R^2; ties go to the lowest index."""
    sw = w.sum()
    Zc = Z - w @ Z / sw
    yc = y - w @ y / sw
    G = (Zc * w[:, None]).T @ Zc
    c = (Zc * w[:, None]).T @ yc
    yy = float(w @ (yc * yc))
    chosen: list[int] = []
    for _ in range(min(k, Z.shape[1])):
        best, best_sse = -1, np.inf
        for j in range(Z.shape[1]):
            if j in chosen:
                continue
            S = chosen + [j]
            GS = G[np.ix_(S, S)]
            beta = np.linalg.solve(GS + alpha * np.eye(len(S)), c[S])
            sse = yy - 2 * beta @ c[S] + beta @ GS @ beta
            if sse < best_sse - 1e-15 * max(yy, 1e-300):
                best, best_sse = j, sse
        chosen.append(best)
    return chosen


@dataclass(frozen=True)
class LimeExplanation:
    intercept: float
    coefficients: tuple[tuple[str, float], ...]
    local_r2: float
    predicted_local: float
    instance_id: int = 0

    @property
    def topk(self) -> frozenset[str]:
        return frozenset(n for n, _ in self.coefficients)


def lime_explain(
    predictor: Callable,
    instance,
    sampler: TabularSampler,
    config: LimeConfig = LimeConfig(),
    instance_id: int = 0,
) -> LimeExplanation:
    x = np.asarray(instance, dtype=float)
    if x.shape != (sampler.n_features,):
        raise LimeError(f"instance must have {sampler.n_features} features")
    rng = derived_rng(config.seed, instance_id) if config.seed is not None else np.random.default_rng()
    rows = np.vstack([x[None, :], sampler.sample(x, config.n_samples - 1, rng)])
    if np.all(rows == rows[0]):
        raise LimeError("perturbation produced identical samples only")
    Z = sampler.representation(rows, x)
    d = sampler.distances(rows, x)
    width = config.kernel_width or 0.75 * np.sqrt(sampler.n_features)
    w = kernel_weights(d, width)
    y = np.asarray(predictor(rows), dtype=float)

    chosen = forward_select(Z, y, w, config.top_k, config.ridge_alpha)
    beta, b = weighted_ridge(Z[:, chosen], y, w, config.ridge_alpha)
    r2 = weighted_r2(y, b + Z[:, chosen] @ beta, w)
    order = sorted(range(len(chosen)), key=lambda i: (-abs(beta[i]), chosen[i]))
    names = sampler.feature_names
    return LimeExplanation(
        intercept=b,
        coefficients=tuple((names[chosen[i]], float(beta[i])) for i in order),
        local_r2=r2,
        predicted_local=float(b + beta.sum()),
        instance_id=instance_id,
    )


@dataclass(frozen=True)
class StabilityReport:
    runs: int
    mean_pairwise_jaccard_topk: float
    coefficient_stddev: tuple[tuple[str, float], ...]
    distinct_topk_sets: int
    topk_sets: tuple[tuple[str, ...], ...]


def run_seed(seed: int, instance_id: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, instance_id, run]).generate_state(1)[0])


def stability(
    predictor: Callable,
    instance,
    sampler: TabularSampler,
    runs: int,
    config: LimeConfig = LimeConfig(),
    instance_id: int = 0,
    reuse_seed: bool = False,
) -> StabilityReport:
    """Repeat ``lime_explain`` and measure how much the explanation moves.

    ``config.seed=None`` gives every run fresh entropy; a fixed seed is either
    reused verbatim (``reuse_seed``) or expanded into distinct per-run seeds.
    """
    if runs < 2:
        raise ValueError("runs must be at least 2")
    explanations = []
    for r in range(runs):
        cfg = config
        if config.seed is not None and not reuse_seed:
            cfg = replace(config, seed=run_seed(config.seed, instance_id, r))
        explanations.append(lime_explain(predictor, instance, sampler, cfg, instance_id))
    sets = [e.topk for e in explanations]
    jac = [len(a & b) / len(a | b) if a | b else 1.0 for a, b in itertools.combinations(sets, 2)]
    names = sorted(set().union(*sets))
    coef = np.array([[dict(e.coefficients).get(n, 0.0) for n in names] for e in explanations])
    std = coef.std(axis=0) if names else np.zeros(0)
    return StabilityReport(
        runs=runs,
        mean_pairwise_jaccard_topk=float(np.mean(jac)),
        coefficient_stddev=tuple(zip(names, std.tolist())),
        distinct_topk_sets=len(set(sets)),
        topk_sets=tuple(tuple(sorted(s)) for s in sets),
    )


def explanation_matrix(explanations, feature_names) -> np.ndarray:
    """Stack explanations into an (instances x features) coefficient matrix."""
    index = {n: j for j, n in enumerate(feature_names)}
    W = np.zeros((len(explanations), len(feature_names)))
    for i, e in enumerate(explanations):
        for name, coef in e.coefficients:
            W[i, index[name]] = coef
    return W
