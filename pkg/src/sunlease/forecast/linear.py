"""Linear regressors on standardized designs: least squares, ridge, lasso.

Each solver takes an already-standardized matrix ``X`` (n x d) and returns
``(weights, intercept)``; the intercept is never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, DomainError, ShapeError


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    degenerate: np.ndarray  # bool mask of zero-variance columns

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        degenerate = ~(scale > 1e-12 * np.maximum(1.0, np.abs(mean)))
        scale = np.where(degenerate, 1.0, scale)
        return cls(mean, scale, degenerate)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        Z = (X - self.mean) / self.scale
        if self.degenerate.any():
            Z[..., self.degenerate] = 0.0
        return Z


def _centered(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"design {X.shape} does not match targets {y.shape}")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    return X - x_mean, y - y_mean, x_mean, y_mean


def ols(X, y):
    """Least squares by SVD (rank-revealing); minimum-norm solution when rank deficient."""
    Xc, yc, x_mean, y_mean = _centered(X, y)
    w, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
    return w, y_mean - x_mean @ w


def ridge(X, y, lam=1.0):
    """Minimize ||y - Xw - b||^2 + lam * ||w||^2 via the normal equations."""
    if lam < 0:
        raise DomainError("ridge lambda must be >= 0")
    Xc, yc, x_mean, y_mean = _centered(X, y)
    d = Xc.shape[1]
    w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(d), Xc.T @ yc)
    return w, y_mean - x_mean @ w


def lasso_lambda_max(X, y):
    """Smallest penalty at which every lasso weight is exactly zero."""
    Xc, yc, _, _ = _centered(X, y)
    return float(np.max(np.abs(Xc.T @ yc)) / Xc.shape[0])


def soft_threshold(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def lasso(X, y, lam=0.01, tol=1e-6, max_iter=10000):
    """Cyclic coordinate descent for (1/2n)||y - Xw - b||^2 + lam * ||w||_1.

    Stops when the largest weight change over a full sweep drops below
    ``tol``; raises ConvergenceError after ``max_iter`` sweeps.
    """
    if lam < 0:
        raise DomainError("lasso lambda must be >= 0")
    Xc, yc, x_mean, y_mean = _centered(X, y)
    n, d = Xc.shape
    col_sq = (Xc ** 2).sum(axis=0) / n
    w = np.zeros(d)
    resid = yc.copy()
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            xj = Xc[:, j]
            old = w[j]
            rho = xj @ resid / n + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                resid -= xj * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            return w, y_mean - x_mean @ w
    raise ConvergenceError("lasso coordinate descent did not converge", max_iter)
