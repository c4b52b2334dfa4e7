"""L2-penalised logistic regression fitted by Newton / IRLS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, grad_norm: float):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float
    regularization: float
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not (np.isfinite(self.weights).all() and np.isfinite(self.intercept)):
            raise ValueError("non-finite coefficients")

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} features, got {X.shape[-1]}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    __call__ = predict_proba


def penalized_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float, scale: np.ndarray) -> float:
    """Mean log-loss plus ``l2/2 * sum((w * scale)**2)``.

    ``scale`` is the per-feature standard deviation used during fitting;
    the penalty therefore acts on standardised coefficients.
    """
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.sum((w * scale) ** 2))


def train_logistic(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 1e-4,
    max_iters: int = 100,
    tol: float = 1e-8,
    feature_names: tuple[str, ...] = (),
) -> LinearModel:
    """Maximise the L2-penalised log-likelihood.

    Targets may be 0/1 labels or soft probabilities. Optimisation runs on
    standardised columns and the result is mapped back to raw units.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree in shape")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("targets must lie in [0, 1]")
    if not (y.max() > 0 and y.min() < 1):
        raise ValueError("both classes must be present")
    n, p = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd == 0
    sd = np.where(const, 1.0, sd)
    Z = np.where(const, 0.0, (X - mu) / sd)
    A = np.hstack([Z, np.ones((n, 1))])
    pen = np.full(p + 1, l2)
    pen[-1] = 0.0

    def objective(beta):
        z = A @ beta
        return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(pen * beta**2))

    beta = np.zeros(p + 1)
    ybar = y.mean()
    beta[-1] = np.log(ybar / (1 - ybar))
    f = objective(beta)
    grad_norm = np.inf
    for _ in range(max_iters):
        q = expit(A @ beta)
        grad = A.T @ (q - y) / n + pen * beta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            break
        W = q * (1 - q) / n
        H = (A * W[:, None]).T @ A + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-12
        step = -np.linalg.solve(H, grad)
        t = 1.0
        while True:
            f_new = objective(beta + t * step)
            if f_new <= f + 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        beta = beta + t * step
        f = f_new
    else:
        q = expit(A @ beta)
        grad_norm = float(np.linalg.norm(A.T @ (q - y) / n + pen * beta))
        if grad_norm > tol:
            raise ConvergenceError(f"logistic fit did not converge in {max_iters} iterations", grad_norm)

    w = np.where(const, 0.0, beta[:-1] / sd)
    b = float(beta[-1] - np.sum(w * mu))
    return LinearModel(w, b, l2, tuple(feature_names))
