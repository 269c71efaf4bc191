"""SMOTE oversampling of the minority class."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import SingleClass, TooFewMinoritySamples


def smote(X, y, k: int = 5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Oversample the minority class until both classes have the same count.

    Each synthetic row is ``x_i + u * (x_nn - x_i)`` with ``x_i`` a uniformly
    drawn minority row, ``x_nn`` one of its ``k`` nearest minority neighbours
    (Euclidean, excluding itself) and ``u ~ U[0, 1)``.  The original rows come
    first, unchanged and in their original order; synthetic rows follow.

    Parameters
    ----------
    X : array of shape (n_samples, n_features)
    y : array of shape (n_samples,), binary labels
    k : int
        Neighbour count.  The minority class must have more than ``k`` rows.
    seed : int

    Returns
    -------
    X_res, y_res : ndarray
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size != 2:
        raise SingleClass(f"need exactly two classes, got {classes.tolist()}")
    if counts[0] == counts[1]:
        return X.copy(), y.copy()

    minority = classes[np.argmin(counts)]
    n_new = int(counts.max() - counts.min())
    Xm = X[y == minority]
    if Xm.shape[0] <= k:
        raise TooFewMinoritySamples(f"minority class has {Xm.shape[0]} rows; need more than k={k}")

    _, nn = cKDTree(Xm).query(Xm, k=k + 1)
    nn = nn[:, 1:]  # drop self

    rng = np.random.default_rng(seed)
    parents = rng.integers(0, Xm.shape[0], size=n_new)
    picks = nn[parents, rng.integers(0, k, size=n_new)]
    u = rng.random(n_new)[:, None]
    synthetic = Xm[parents] + u * (Xm[picks] - Xm[parents])

    X_res = np.vstack([X, synthetic])
    y_res = np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)])
    return X_res, y_res
