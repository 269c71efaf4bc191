"""Binary C-SVC with an RBF kernel, trained by SMO.

The dual is solved with the working-set selection of Fan, Chen & Lin (2005),
"Working set selection using second order information for training SVM"
(the rule LIBSVM uses), without shrinking.  Per-class penalties allow class
weighting.  Labels are +1 / -1.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _KernelRows:
    """Kernel matrix access: precomputed when small, row cache otherwise."""

    def __init__(self, X, gamma, dense=None, max_dense=4000, cache_rows=2048):
        self.X = X
        self.gamma = gamma
        if dense is None and X.shape[0] <= max_dense:
            dense = rbf_kernel(X, X, gamma)
        self.dense = dense
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_rows = cache_rows

    def row(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i]
        r = self._cache.get(i)
        if r is None:
            r = rbf_kernel(self.X[i], self.X, self.gamma)[0]
            self._cache[i] = r
            if len(self._cache) > self._cache_rows:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(i)
        return r


@dataclass
class SMOResult:
    alpha: np.ndarray
    rho: float
    n_iter: int
    converged: bool
    objective: float


def smo_solve(X, y, C, gamma: float, eps: float = 1e-3, max_iter: int | None = None, kernel=None) -> SMOResult:
    """Minimise ``0.5 a'Qa - sum(a)`` s.t. ``y'a = 0``, ``0 <= a_i <= C_i``.

    ``Q_ij = y_i y_j K(x_i, x_j)``.  ``C`` is a scalar or per-sample array.
    ``kernel`` may supply the precomputed ``K(X, X)``.  The decision function
    is ``sum_i a_i y_i K(x_i, x) - rho``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    Cv = np.broadcast_to(np.asarray(C, dtype=np.float64), (n,)).copy()
    if max_iter is None:
        max_iter = max(100_000, 100 * n)

    K = _KernelRows(X, gamma, dense=kernel)
    QD = np.ones(n)  # RBF diagonal
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0

    it = 0
    converged = False
    while it < max_iter:
        # --- working set selection (second-order) ---
        at_upper = alpha >= Cv
        at_lower = alpha <= 0
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        minus_yG = -y * G
        if not up.any() or not low.any():
            converged = True
            break
        cand = np.where(up, minus_yG, -np.inf)
        i = int(np.argmax(cand))
        Gmax = cand[i]
        Ki = K.row(i)

        low_vals = np.where(low, minus_yG, np.inf)
        Gmin = low_vals.min()
        if Gmax - Gmin < eps:
            converged = True
            break
        b = Gmax - minus_yG  # > 0 for admissible j
        admissible = low & (b > 0)
        if not admissible.any():
            converged = True
            break
        quad = QD[i] + QD - 2.0 * Ki
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(admissible, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        Kj = K.row(j)

        # --- two-variable update (LIBSVM Solver::Solve) ---
        old_ai, old_aj = alpha[i], alpha[j]
        Ci, Cj = Cv[i], Cv[j]
        if y[i] != y[j]:
            qc = QD[i] + QD[j] + 2.0 * y[i] * y[j] * Ki[j]
            qc = qc if qc > 0 else TAU
            delta = (-G[i] - G[j]) / qc
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > Ci - Cj:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = Ci - diff
            elif alpha[j] > Cj:
                alpha[j] = Cj
                alpha[i] = Cj + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * y[i] * y[j] * Ki[j]
            qc = qc if qc > 0 else TAU
            delta = (G[i] - G[j]) / qc
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > Ci:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = s - Ci
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = s
            if s > Cj:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = s - Cj
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = s

        dai, daj = alpha[i] - old_ai, alpha[j] - old_aj
        G += y * (y[i] * dai * Ki + y[j] * daj * Kj)
        it += 1

    if not converged:
        logger.warning("SMO stopped at max_iter=%d before reaching eps=%g", max_iter, eps)

    rho = _rho(alpha, y, G, Cv)
    objective = 0.5 * float(alpha @ (G - 1.0)) if n else 0.0  # 0.5 a'Qa - e'a = 0.5 a'(G - e)
    return SMOResult(alpha, rho, it, converged, objective)


def _rho(alpha, y, G, Cv) -> float:
    yG = y * G
    at_upper = alpha >= Cv
    at_lower = alpha <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        return float(yG[free].mean())
    # bounds from the KKT conditions on the clipped variables
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


@dataclass
class RBFSVC:
    """Fitted kernel machine: ``f(x) = sum_i coef_i K(sv_i, x) - rho``."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    rho: float
    gamma: float

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], -self.rho)
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], 4096):
            block = rbf_kernel(X[start : start + 4096], self.support_vectors, self.gamma)
            out[start : start + 4096] = block @ self.dual_coef - self.rho
        return out


def fit_svc(X, y, C: float, gamma: float, sample_weight=None, eps: float = 1e-3, kernel=None) -> RBFSVC:
    """Fit on labels in {+1, -1}; ``sample_weight`` scales C per sample."""
    y = np.asarray(y, dtype=np.float64)
    Cv = C * (np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64))
    res = smo_solve(X, y, Cv, gamma, eps=eps, kernel=kernel)
    sv = res.alpha > 0
    return RBFSVC(
        support_vectors=np.asarray(X, dtype=np.float64)[sv].copy(),
        dual_coef=(res.alpha * y)[sv],
        rho=res.rho,
        gamma=float(gamma),
    )
