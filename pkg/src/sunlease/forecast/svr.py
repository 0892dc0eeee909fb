"""Epsilon-insensitive support vector regression solved by SMO.

The dual is written over 2n variables a = (alpha, alpha*) with signs
s = (+1..., -1...):

    min 1/2 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C

with Q_ij = s_i s_j K(x_i, x_j), p = (eps - y, eps + y). Pairs are chosen by
maximal violation with second-order gain (Fan, Chen & Lin, 2005); the bias
is recovered from the free variables as in LIBSVM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, ShapeError

TAU = 1e-12


def rbf_kernel(A, B, gamma):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = (A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SVRSolution:
    support: np.ndarray  # support vectors (rows of X with nonzero coef)
    coef: np.ndarray  # alpha - alpha*, one per support vector
    intercept: float
    gamma: float
    iterations: int

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.coef) == 0:
            return np.full(X.shape[0], self.intercept)
        if X.shape[1] != self.support.shape[1]:
            raise ShapeError(f"expected {self.support.shape[1]} features, got {X.shape[1]}")
        return rbf_kernel(X, self.support, self.gamma) @ self.coef + self.intercept


def smo_svr(X, y, C=10.0, epsilon=0.01, gamma=None, tol=1e-3, max_iter=500000, return_dual=False):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if y.shape != (n,):
        raise ShapeError(f"design {X.shape} does not match targets {y.shape}")
    if n < 2:
        raise ShapeError("svr needs at least 2 samples")
    if gamma is None:
        gamma = 1.0 / X.shape[1]

    K = rbf_kernel(X, X, gamma)
    diag = np.diag(K).copy()
    s = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([epsilon - y, epsilon + y])
    idx = np.arange(2 * n) % n

    it = 0
    while True:
        # -s*G is the ascent direction; I_up may increase s_t a_t, I_low may decrease it
        v = -s * G
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        if not up.any() or not low.any():
            break
        v_up = np.where(up, v, -np.inf)
        i = int(np.argmax(v_up))
        g_max = v_up[i]
        g_min = np.min(np.where(low, v, np.inf))
        if g_max - g_min < tol:
            break
        if it >= max_iter:
            raise ConvergenceError("SMO did not reach KKT tolerance", it)
        it += 1

        ki = K[idx[i], idx]
        grad_diff = g_max - v
        quad = diag[idx[i]] + diag[idx] - 2.0 * ki
        quad = np.where(quad > 0, quad, TAU)
        gain = np.where(low & (grad_diff > 0), -(grad_diff ** 2) / quad, np.inf)
        j = int(np.argmin(gain))

        Qij = s[i] * s[j] * K[idx[i], idx[j]]
        ai_old, aj_old = a[i], a[j]
        if s[i] != s[j]:
            q = diag[idx[i]] + diag[idx[j]] + 2.0 * Qij
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            q = diag[idx[i]] + diag[idx[j]] - 2.0 * Qij
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total

        d_i = a[i] - ai_old
        d_j = a[j] - aj_old
        G += s * (s[i] * d_i * ki + s[j] * d_j * K[idx[j], idx])

    intercept = _intercept(a, s, G, C)
    coef_full = a[:n] - a[n:]
    sv = coef_full != 0
    sol = SVRSolution(X[sv].copy(), coef_full[sv].copy(), intercept, float(gamma), it)
    if return_dual:
        return sol, a[:n].copy(), a[n:].copy()
    return sol


def _intercept(a, s, G, C):
    yG = s * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = yG[free].mean()
    else:
        ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0
    return float(-rho)
