from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import rankdata

Predictor = Callable[[np.ndarray], np.ndarray]
"""Any callable mapping an (n, p) matrix to n probabilities in [0, 1]."""


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    threshold: float = 0.5

    def as_row(self) -> list[float]:
        return [self.accuracy, self.precision, self.recall, self.f1, self.auc]


def predict_proba(model: Predictor, row) -> float:
    """Probability for a single row."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise ValueError("row must be a 1-D vector")
    width = getattr(model, "n_features", None)
    if width is None:
        width = len(getattr(model, "feature_names", ())) or None
    if width is not None and row.shape[0] != width:
        raise ValueError(f"expected {width} features, got {row.shape[0]}")
    return float(np.asarray(model(row[None, :]))[0])


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank-sum (ties count 1/2)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(probs, labels, threshold: float = 0.5) -> MetricReport:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.size == 0:
        raise MetricError("no rows to evaluate")
    # scores exactly at the threshold are classified positive
    pred = probs >= threshold
    truth = labels == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    accuracy = float(np.mean(pred == truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricReport(accuracy, precision, recall, f1, auc(probs, labels), threshold)


def evaluate(predictor: Predictor, data, threshold: float = 0.5) -> MetricReport:
    return classification_metrics(predictor(data.matrix), data.labels, threshold)


def r2_score(target, fitted) -> float:
    """Coefficient of determination of ``fitted`` against ``target``."""
    target = np.asarray(target, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    sst = float(np.sum((target - target.mean()) ** 2))
    sse = float(np.sum((target - fitted) ** 2))
    if sst == 0:
        return 1.0 if sse == 0 else float("-inf")
    return 1.0 - sse / sst
