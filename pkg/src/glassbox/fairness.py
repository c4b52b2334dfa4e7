"""Dependence audit by orthogonal-projection perturbation."""
from __future__ import annotations

import fnmatch
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._seeding import derived_rng

DEFAULT_SENSITIVE = ("race_*", "sex_*", "nac_*")


class AuditError(ValueError):
    pass


def orthogonal_residual(X: np.ndarray, j: int, exclude: Sequence[int] = ()) -> np.ndarray:
    """Column ``j`` minus its least-squares fit on the other columns and an intercept.

    Columns listed in ``exclude`` are left out of the design (used for the
    one-hot siblings of ``j``, which would otherwise reconstruct it exactly).
    Rank-deficient designs get the minimum-norm solution.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise AuditError("need a matrix with at least two columns")
    x = X[:, j]
    if np.ptp(x) == 0:
        raise AuditError(f"column {j} is constant")
    others = [k for k in range(X.shape[1]) if k != j and k not in set(exclude)]
    A = np.hstack([np.ones((X.shape[0], 1)), X[:, others]])
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    return x - A @ coef


STRATEGIES = ("residual-shuffle", "projection")


@dataclass(frozen=True)
class AuditConfig:
    """``strategy`` picks how x' is built for feature j.

    residual-shuffle: keep the part of x_j predictable from the other columns
        and shuffle its orthogonal remainder across rows.
    projection: set x_j to zero and replace every other column by its
        component orthogonal to x_j (uncentred), as the FairML library does.
    """

    sample_size: int = 2000
    seed: int = 0
    sensitive_features: tuple[str, ...] = DEFAULT_SENSITIVE
    strategy: str = "residual-shuffle"

    def __post_init__(self):
        if self.sample_size < 30:
            raise ValueError("sample_size must be at least 30")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")

    def is_sensitive(self, name: str) -> bool:
        return any(fnmatch.fnmatchcase(name, pat) for pat in self.sensitive_features)


@dataclass(frozen=True)
class DependenceReport:
    feature_names: tuple[str, ...]
    scores: np.ndarray
    normalized: np.ndarray
    sensitive: tuple[bool, ...]
    sample_size: int
    seed: int = 0
    strategy: str = "residual-shuffle"

    def score(self, name: str) -> float:
        return float(self.normalized[self.feature_names.index(name)])

    def ranking(self) -> list[tuple[str, float]]:
        """Features by decreasing |normalized score|."""
        order = sorted(range(len(self.feature_names)), key=lambda k: (-abs(self.normalized[k]), self.feature_names[k]))
        return [(self.feature_names[k], float(self.normalized[k])) for k in order]


def projection_perturb(X: np.ndarray, j: int) -> np.ndarray:
    """Zero column j and make every other column orthogonal to the original x_j."""
    v = X[:, j]
    c = X.T @ v / (v @ v)
    c[j] = 1.0
    return X - np.outer(v, c)


def _normalize(scores: np.ndarray) -> np.ndarray:
    m = np.max(np.abs(scores)) if scores.size else 0.0
    return scores / m if m > 0 else np.zeros_like(scores)


def audit(
    predictor: Callable,
    X: np.ndarray,
    config: AuditConfig = AuditConfig(),
    feature_names: Sequence[str] | None = None,
    siblings: dict[int, Sequence[int]] | None = None,
    threads: int = 1,
) -> DependenceReport:
    """Signed dependence of ``predictor`` on every column of ``X``.

    x' is built per ``config.strategy``. The score is the mean output change
    ``F(x) - F(x')`` oriented by the direction in which x_j moved, so a model
    increasing in x_j scores positive.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < config.sample_size:
        raise AuditError(f"need at least {config.sample_size} rows, got {n}")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{k}" for k in range(p))
    siblings = siblings or {}
    rng = derived_rng(config.seed)
    rows = np.sort(rng.choice(n, size=config.sample_size, replace=False))
    S = X[rows]
    base = np.asarray(predictor(S), dtype=float)

    def one(j: int) -> float:
        if np.ptp(S[:, j]) == 0:
            return 0.0
        if config.strategy == "projection":
            Sp = projection_perturb(S, j)
        else:
            r = orthogonal_residual(S, j, exclude=siblings.get(j, ()))
            perm = derived_rng(config.seed, j).permutation(len(S))
            Sp = S.copy()
            Sp[:, j] = S[:, j] - r + r[perm]
        direction = np.sign(S[:, j] - Sp[:, j])
        return float(np.mean(direction * (base - np.asarray(predictor(Sp), dtype=float))))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            raw = np.array(list(pool.map(one, range(p))))
    else:
        raw = np.array([one(j) for j in range(p)])
    return DependenceReport(
        feature_names=names,
        scores=raw,
        normalized=_normalize(raw),
        sensitive=tuple(config.is_sensitive(nm) for nm in names),
        sample_size=config.sample_size,
        seed=config.seed,
        strategy=config.strategy,
    )


def sibling_map(groups) -> dict[int, tuple[int, ...]]:
    """For each one-hot column, the other columns of its group."""
    out = {}
    for g in groups:
        if len(g.columns) > 1:
            for c in g.columns:
                out[c] = tuple(k for k in g.columns if k != c)
    return out


@dataclass(frozen=True)
class DivergenceSummary:
    features: tuple[str, ...]
    threshold: float
    top: int
    details: tuple[tuple[str, float], ...] = field(default=())


def compare_with_importance(
    dep: DependenceReport,
    shap_rank: Sequence,
    pi_rank: Sequence,
    threshold: float = 0.25,
    top: int = 10,
    group_of: dict[str, str] | None = None,
) -> DivergenceSummary:
    """Features the audit flags (|normalized| >= threshold) that neither
    importance ranking places in its top ``top``.

    Rankings may be names or (name, value) pairs. ``group_of`` maps a column
    to the label a ranking uses for it (for group-level permutation scores).
    """
    def names(rank):
        return [r if isinstance(r, str) else r[0] for r in rank][:top]

    group_of = group_of or {}
    top_shap = set(names(shap_rank))
    top_pi = set(names(pi_rank))
    flagged = []
    for name, s in dep.ranking():
        if abs(s) < threshold:
            continue
        label = group_of.get(name, name)
        in_shap = name in top_shap or label in top_shap
        in_pi = name in top_pi or label in top_pi
        if not in_shap and not in_pi:
            flagged.append((name, s))
    return DivergenceSummary(tuple(n for n, _ in flagged), threshold, top, tuple(flagged))
