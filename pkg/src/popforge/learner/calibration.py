"""Platt scaling: P(REAL | d) = 1 / (1 + exp(A d + B))."""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

# A >= 0 would invert the ranking; clamp to this slope instead
MIN_SLOPE = -1e-6


def fit_platt(decision, labels, max_iter: int = 100) -> tuple[float, float]:
    """Fit (A, B) by Newton's method with backtracking.

    Follows Lin, Lin & Weng (2007), "A note on Platt's probabilistic outputs
    for support vector machines": regularised targets, and the loss is
    evaluated in a form that cannot overflow.

    ``labels`` are 1 for the positive (REAL) side and 0 otherwise.
    """
    f = np.asarray(decision, dtype=np.float64)
    y = np.asarray(labels) > 0
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y, hi, lo)

    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    sigma, min_step, eps = 1e-12, 1e-10, 1e-5

    def loss(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z, (t - 1) * z) + np.log1p(np.exp(-np.abs(z)))))

    fval = loss(A, B)
    for _ in range(max_iter):
        p = platt_proba(f, A, B)
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            newA, newB = A + step * dA, B + step * dB
            newf = loss(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2
        else:
            logger.warning("Platt line search failed; keeping current estimate")
            break
    if A >= MIN_SLOPE:
        logger.warning("Platt slope %.3g is not negative; clamping to %g", A, MIN_SLOPE)
        A = MIN_SLOPE
    return float(A), float(B)


def platt_proba(decision, A: float, B: float) -> np.ndarray:
    z = A * np.asarray(decision, dtype=np.float64) + B
    e = np.exp(-np.abs(z))
    # 1 / (1 + e^z) without overflow for large |z|
    return np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
