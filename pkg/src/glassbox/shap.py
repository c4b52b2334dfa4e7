"""Shapley-value attributions by exact enumeration and KernelSHAP.

The value of a coalition S is the model output averaged over a background
set, with the features in S fixed to the explained instance:

    v(S) = mean_b f(x_S, b_rest)

Features whose instance value equals every background value cannot change
any v(S); they receive zero and are dropped from the game before solving.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logit

from ._seeding import derived_rng

MAX_EXACT_FEATURES = 20
_CHUNK_ELEMENTS = 2_000_000


class ShapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Attribution:
    phi: np.ndarray
    base_value: float
    output_value: float
    instance_id: int = 0

    @property
    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + float(np.sum(self.phi)) - self.output_value)


@dataclass(frozen=True, eq=False)
class BackgroundSet:
    rows: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.shape[0] == 0:
            raise ShapError("background set is empty")
        object.__setattr__(self, "rows", rows)

    @property
    def size(self) -> int:
        return self.rows.shape[0]

    @classmethod
    def sample(cls, X: np.ndarray, size: int = 100, seed: int = 0) -> "BackgroundSet":
        X = np.asarray(X, dtype=float)
        if size >= len(X):
            return cls(X.copy())
        idx = np.sort(np.random.default_rng(seed).choice(len(X), size=size, replace=False))
        return cls(X[idx])


@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    feature_names: tuple[str, ...]
    base_value: float
    phi: np.ndarray
    output_values: np.ndarray
    instance_ids: np.ndarray

    def __post_init__(self):
        if self.phi.ndim != 2 or self.phi.shape[1] != len(self.feature_names):
            raise ShapError("phi must be (instances, features)")
        if self.output_values.shape != (self.phi.shape[0],) or self.instance_ids.shape != (self.phi.shape[0],):
            raise ShapError("one output value and id per attribution row")

    def __len__(self) -> int:
        return self.phi.shape[0]

    def row(self, i: int) -> Attribution:
        return Attribution(self.phi[i], self.base_value, float(self.output_values[i]), int(self.instance_ids[i]))

    def position(self, instance_id: int) -> int:
        hits = np.flatnonzero(self.instance_ids == instance_id)
        if len(hits) == 0:
            raise KeyError(f"unknown instance id {instance_id}")
        return int(hits[0])

    @classmethod
    def from_attributions(cls, attrs: Sequence[Attribution], feature_names) -> "AttributionMatrix":
        if not attrs:
            raise ShapError("no attributions")
        return cls(
            tuple(feature_names),
            float(attrs[0].base_value),
            np.vstack([a.phi for a in attrs]),
            np.array([a.output_value for a in attrs]),
            np.array([a.instance_id for a in attrs], dtype=np.int64),
        )


def output_transform(predictor: Callable, output: str) -> Callable:
    if output == "probability":
        return predictor
    if output == "log_odds":
        return lambda X: logit(np.clip(predictor(X), 1e-15, 1 - 1e-15))
    raise ValueError(f"unknown output space {output!r}")


def _check(instance, background: BackgroundSet):
    x = np.asarray(instance, dtype=float).ravel()
    if x.shape[0] != background.rows.shape[1]:
        raise ShapError(f"instance has {x.shape[0]} features, background has {background.rows.shape[1]}")
    return x


def coalition_values(f: Callable, x: np.ndarray, bg: np.ndarray, cols: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """v(S) for each row of the boolean ``masks`` over feature indices ``cols``."""
    n_bg, p = bg.shape
    out = np.empty(len(masks))
    step = max(1, _CHUNK_ELEMENTS // (n_bg * p))
    for lo in range(0, len(masks), step):
        block = masks[lo : lo + step]
        comp = np.broadcast_to(bg, (len(block), n_bg, p)).copy()
        full = np.zeros((len(block), p), dtype=bool)
        full[:, cols] = block
        comp = np.where(full[:, None, :], x[None, None, :], comp)
        out[lo : lo + step] = np.asarray(f(comp.reshape(-1, p))).reshape(len(block), n_bg).mean(axis=1)
    return out


def _varying(x: np.ndarray, bg: np.ndarray) -> np.ndarray:
    return np.flatnonzero((bg != x[None, :]).any(axis=0))


def _endpoints(f, x, bg):
    base = float(np.mean(f(bg)))
    out = float(np.asarray(f(x[None, :]))[0])
    return base, out


def exact_shapley(
    predictor: Callable,
    instance,
    background: BackgroundSet,
    output: str = "probability",
    instance_id: int = 0,
) -> Attribution:
    """Shapley values by enumerating every coalition of the varying features."""
    x = _check(instance, background)
    f = output_transform(predictor, output)
    bg = background.rows
    cols = _varying(x, bg)
    m = len(cols)
    if m > MAX_EXACT_FEATURES:
        raise ShapError(f"exact enumeration is limited to {MAX_EXACT_FEATURES} features, got {m}")
    base, out = _endpoints(f, x, bg)
    phi = np.zeros(x.shape[0])
    if m == 0:
        return Attribution(phi, base, out, instance_id)
    codes = np.arange(2**m, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    v = coalition_values(f, x, bg, cols, masks)
    v[0] = base
    v[-1] = out
    sizes = np.bitwise_count(codes)
    w = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])
    for i in range(m):
        bit = 1 << i
        S = codes[(codes & bit) == 0]
        phi[cols[i]] = float(np.sum(w[sizes[S]] * (v[S | bit] - v[S])))
    return Attribution(phi, base, out, instance_id)


def shapley_kernel(m: int, s: int) -> float:
    """Kernel weight of one coalition of size ``s`` among ``m`` players."""
    return (m - 1) / (math.comb(m, s) * s * (m - s))


def _coalitions(m: int, budget: int, rng: np.random.Generator):
    """Coalition masks and regression weights.

    Sizes are taken in complementary pairs from the outside in and enumerated
    while the budget allows; the remaining middle sizes are sampled in
    complement pairs, sharing the remaining kernel mass equally.
    """
    if budget >= 2**m - 2:
        codes = np.arange(1, 2**m - 1, dtype=np.int64)
        masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
        sizes = masks.sum(axis=1)
        return masks, np.array([shapley_kernel(m, s) for s in sizes])

    masks: list[np.ndarray] = []
    weights: list[float] = []
    remaining = budget
    s = 1
    while s <= m - s:
        pair = (s,) if s == m - s else (s, m - s)
        count = sum(math.comb(m, k) for k in pair)
        if count > remaining:
            break
        for k in pair:
            wk = shapley_kernel(m, k)
            for combo in _combinations_masks(m, k):
                masks.append(combo)
                weights.append(wk)
        remaining -= count
        s += 1
    left = [k for k in range(s, m - s + 1)]
    if left and remaining > 0:
        mass = np.array([(m - 1) / (k * (m - k)) for k in left])
        probs = mass / mass.sum()
        drawn: dict[bytes, list] = {}
        n_draw = max(1, remaining // 2)
        per = float(mass.sum()) / (2 * n_draw)
        for _ in range(n_draw):
            k = left[int(rng.choice(len(left), p=probs))]
            z = np.zeros(m, dtype=bool)
            z[rng.choice(m, size=k, replace=False)] = True
            for mask in (z, ~z):
                key = mask.tobytes()
                if key in drawn:
                    drawn[key][1] += per
                else:
                    drawn[key] = [mask, per]
        for mask, wt in drawn.values():
            masks.append(mask)
            weights.append(wt)
    return np.array(masks, dtype=bool).reshape(-1, m), np.array(weights)


def _combinations_masks(m: int, k: int):
    from itertools import combinations

    for idx in combinations(range(m), k):
        z = np.zeros(m, dtype=bool)
        z[list(idx)] = True
        yield z


def kernel_shap(
    predictor: Callable,
    instance,
    background: BackgroundSet,
    n_coalitions: int = 2048,
    seed: int = 0,
    ridge: float = 1e-10,
    output: str = "probability",
    instance_id: int = 0,
) -> Attribution:
    """KernelSHAP: Shapley-kernel weighted least squares over coalitions.

    Empty and full coalitions enter as the equality constraint
    ``sum(phi) = f(x) - base`` (solved through the KKT system).
    """
    x = _check(instance, background)
    if x.shape[0] < 2:
        raise ShapError("kernel SHAP needs at least two features")
    f = output_transform(predictor, output)
    bg = background.rows
    cols = _varying(x, bg)
    m = len(cols)
    base, out = _endpoints(f, x, bg)
    phi = np.zeros(x.shape[0])
    delta = out - base
    if m == 0:
        return Attribution(phi, base, out, instance_id)
    if m == 1:
        phi[cols[0]] = delta
        return Attribution(phi, base, out, instance_id)

    rng = derived_rng(seed, instance_id)
    Z, w = _coalitions(m, n_coalitions, rng)
    y = coalition_values(f, x, bg, cols, Z) - base
    Zf = Z.astype(float)
    A = (Zf * w[:, None]).T @ Zf + ridge * np.eye(m)
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = A
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.concatenate([(Zf * w[:, None]).T @ y, [delta]])
    try:
        if np.linalg.cond(kkt) > 1e14:
            raise np.linalg.LinAlgError
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        raise ShapError(
            "weighted coalition system is singular; increase ridge or n_coalitions"
        ) from None
    phi[cols] = sol[:m]
    return Attribution(phi, base, out, instance_id)


def explain(
    predictor: Callable,
    X: np.ndarray,
    background: BackgroundSet,
    feature_names: Sequence[str],
    method: str = "kernel",
    n_coalitions: int = 2048,
    seed: int = 0,
    output: str = "probability",
    instance_ids: Sequence[int] | None = None,
    threads: int = 1,
) -> AttributionMatrix:
    """Attribute every row of ``X``. Per-row seeds depend only on
    (seed, instance id), so the result is independent of ``threads``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ids = np.arange(len(X)) if instance_ids is None else np.asarray(instance_ids)

    def job(i):
        if method == "exact":
            return exact_shapley(predictor, X[i], background, output=output, instance_id=int(ids[i]))
        if method == "kernel":
            return kernel_shap(
                predictor, X[i], background, n_coalitions=n_coalitions, seed=seed, output=output, instance_id=int(ids[i])
            )
        raise ValueError(f"unknown method {method!r}")

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            attrs = list(pool.map(job, range(len(X))))
    else:
        attrs = [job(i) for i in range(len(X))]
    return AttributionMatrix.from_attributions(attrs, feature_names)


def shap_importance(attrs: AttributionMatrix) -> list[tuple[str, float]]:
    """Mean |phi| per feature, descending; ties broken by name."""
    if len(attrs) == 0:
        raise ShapError("no attributions")
    mean_abs = np.abs(attrs.phi).mean(axis=0)
    return sorted(zip(attrs.feature_names, mean_abs.tolist()), key=lambda kv: (-kv[1], kv[0]))


@dataclass(frozen=True, eq=False)
class SummaryRow:
    feature: str
    phi: np.ndarray
    normalized_value: np.ndarray


def summary_data(attrs: AttributionMatrix, X: np.ndarray) -> list[SummaryRow]:
    """Per-feature (phi, min-max normalised value) in importance order.

    A constant feature gets normalised value 0.5 everywhere.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != attrs.phi.shape:
        raise ShapError("feature matrix does not align with attributions")
    rows = []
    for name, _ in shap_importance(attrs):
        j = attrs.feature_names.index(name)
        col = X[:, j]
        lo, hi = col.min(), col.max()
        norm = np.full(len(col), 0.5) if hi == lo else (col - lo) / (hi - lo)
        rows.append(SummaryRow(name, attrs.phi[:, j].copy(), norm))
    return rows


@dataclass(frozen=True, eq=False)
class DependencyPoints:
    feature: str
    interaction: str
    feature_values: np.ndarray
    phi_values: np.ndarray
    interaction_values: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.feature_values.tolist(), self.phi_values.tolist(), self.interaction_values.tolist()))


def interaction_statistic(phi: np.ndarray, values: np.ndarray, candidate: np.ndarray, n_bins: int = 10) -> float:
    """Variance over quantile bins of ``values`` of the high-minus-low contrast
    in mean ``phi``, splitting rows at the median of ``candidate``."""
    if candidate.min() == candidate.max():
        return 0.0
    t = np.median(candidate)
    high = candidate > t
    if not high.any():
        high = candidate >= t
    edges = np.unique(np.quantile(values, np.linspace(0, 1, n_bins + 1)[1:-1]))
    bins = np.searchsorted(edges, values, side="left")
    contrasts = []
    for b in np.unique(bins):
        in_bin = bins == b
        hi, lo = in_bin & high, in_bin & ~high
        if hi.any() and lo.any():
            contrasts.append(phi[hi].mean() - phi[lo].mean())
    if len(contrasts) < 2:
        return 0.0
    return float(np.var(contrasts))


def dependency_data(attrs: AttributionMatrix, X: np.ndarray, feature: str, interaction: str = "auto") -> DependencyPoints:
    names = attrs.feature_names
    if feature not in names:
        raise KeyError(f"unknown feature {feature!r}")
    j = names.index(feature)
    X = np.asarray(X, dtype=float)
    if interaction == "auto":
        scored = [
            (interaction_statistic(attrs.phi[:, j], X[:, j], X[:, c]), name)
            for c, name in enumerate(names)
            if c != j
        ]
        interaction = min(scored, key=lambda t: (-t[0], t[1]))[1]
    elif interaction not in names:
        raise KeyError(f"unknown feature {interaction!r}")
    c = names.index(interaction)
    return DependencyPoints(feature, interaction, X[:, j].copy(), attrs.phi[:, j].copy(), X[:, c].copy())


@dataclass(frozen=True)
class ForceData:
    base_value: float
    output_value: float
    contributions: tuple[tuple[str, float], ...]


def force_data(attr: Attribution, feature_names: Sequence[str], tol: float = 1e-6) -> ForceData:
    """Signed contributions ordered by magnitude, with base and output."""
    if attr.local_accuracy_gap > tol:
        raise ShapError(f"local accuracy violated by {attr.local_accuracy_gap:.3e}")
    order = sorted(range(len(attr.phi)), key=lambda k: (-abs(attr.phi[k]), k))
    return ForceData(
        float(attr.base_value),
        float(attr.output_value),
        tuple((feature_names[k], float(attr.phi[k])) for k in order),
    )


@dataclass(frozen=True)
class DecisionData:
    feature_order: tuple[str, ...]
    base_value: float
    paths: tuple[tuple[int, tuple[float, ...]], ...]


def decision_data(attrs: AttributionMatrix, subset: Sequence[int]) -> DecisionData:
    """Cumulative base-to-output path per instance, features in global importance order."""
    order = [attrs.feature_names.index(n) for n, _ in shap_importance(attrs)]
    paths = []
    for iid in subset:
        i = attrs.position(int(iid))
        steps = attrs.base_value + np.concatenate([[0.0], np.cumsum(attrs.phi[i, order])])
        paths.append((int(iid), tuple(steps.tolist())))
    return DecisionData(tuple(attrs.feature_names[k] for k in order), attrs.base_value, tuple(paths))
