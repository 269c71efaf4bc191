"""Grid-searched, class-weighted RBF SVM with Platt-calibrated outputs."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateData, UntrainedModel
from .calibration import fit_platt, platt_proba
from .svm import RBFSVC, fit_svc, rbf_kernel

logger = logging.getLogger(__name__)

MODEL_FORMAT = "popforge-svm/1"


@dataclass(frozen=True)
class GridSpec:
    C_values: tuple = (0.1, 1.0, 10.0, 100.0)
    # "1/d" resolves to 1 / n_features at training time
    gamma_values: tuple = (0.01, 0.1, "1/d", 1.0)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if not self.C_values or not self.gamma_values:
            raise ValueError("C_values and gamma_values must be non-empty")

    def gammas(self, n_features: int) -> list[float]:
        out = []
        for g in self.gamma_values:
            g = 1.0 / n_features if g == "1/d" else float(g)
            if g not in out:
                out.append(g)
        return out


@dataclass
class TrainedDetector:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    rho: float
    gamma: float
    C: float
    class_weights: dict
    platt_a: float
    platt_b: float
    scale_mean: np.ndarray
    scale_std: np.ndarray
    feature_mask: np.ndarray
    cv_score: float
    cv_table: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    seed: int = 0

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_mask.size:
            raise ValueError(f"expected {self.feature_mask.size} features, got {X.shape[1]}")
        return (X[:, self.feature_mask] - self.scale_mean) / self.scale_std

    def decision_function(self, X) -> np.ndarray:
        """Signed margin; positive means REAL."""
        svc = RBFSVC(self.support_vectors, self.dual_coef, self.rho, self.gamma)
        return svc.decision_function(self._prepare(X))

    def predict_proba(self, X) -> np.ndarray:
        """P(REAL) for each row."""
        return platt_proba(self.decision_function(X), self.platt_a, self.platt_b)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        """1 (REAL) where P(REAL) >= threshold, else 0 (SPOOF)."""
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("support_vectors", "dual_coef", "scale_mean", "scale_std", "feature_mask"):
            d[key] = np.asarray(getattr(self, key)).tolist()
        d["format"] = MODEL_FORMAT
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedDetector":
        d = dict(d)
        fmt = d.pop("format", None)
        if fmt != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {fmt!r}")
        n_kept = int(np.sum(d["feature_mask"]))
        d["support_vectors"] = np.asarray(d["support_vectors"], dtype=np.float64).reshape(-1, n_kept)
        d["dual_coef"] = np.asarray(d["dual_coef"], dtype=np.float64)
        d["scale_mean"] = np.asarray(d["scale_mean"], dtype=np.float64)
        d["scale_std"] = np.asarray(d["scale_std"], dtype=np.float64)
        d["feature_mask"] = np.asarray(d["feature_mask"], dtype=bool)
        return cls(**d)


def save_model(model: TrainedDetector, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n")
    return path


def load_model(path) -> TrainedDetector:
    return TrainedDetector.from_dict(json.loads(Path(path).read_text()))


def predict_proba(model: TrainedDetector, x) -> float | np.ndarray:
    """P(REAL) for a feature vector (scalar) or a matrix of rows (array)."""
    if not isinstance(model, TrainedDetector):
        raise UntrainedModel("predict_proba needs a trained detector")
    if hasattr(x, "as_array"):
        x = x.as_array()
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    p = model.predict_proba(x)
    return float(p[0]) if x.ndim == 1 else p


def stratified_folds(y, folds: int, seed: int, groups=None) -> np.ndarray:
    """Fold index per sample; each class is permuted then dealt round-robin.

    With ``groups``, whole groups are dealt instead of samples, so members of
    a group (e.g. identical rows) never straddle a train/validation split.
    """
    y = np.asarray(y)
    groups = np.arange(y.size) if groups is None else np.asarray(groups)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    for cls in np.unique(y):
        members = y == cls
        uniq, inv = np.unique(groups[members], return_inverse=True)
        dealt = np.empty(uniq.size, dtype=np.int64)
        dealt[rng.permutation(uniq.size)] = np.arange(uniq.size) % folds
        fold_of[members] = dealt[inv]
    return fold_of


def balanced_accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    recalls = [np.mean(y_pred[y_true == c] == c) for c in np.unique(y_true)]
    return float(np.mean(recalls))


def class_weights(y) -> dict:
    """Balanced weights n / (2 * n_c), keyed by class label."""
    y = np.asarray(y)
    return {int(c): y.size / (2.0 * np.sum(y == c)) for c in (0, 1)}


def train(X, y, grid: GridSpec = GridSpec(), eps: float = 1e-3) -> TrainedDetector:
    """Standardise, grid-search (C, gamma) by stratified k-fold balanced
    accuracy, refit the best cell on everything, and fit Platt scaling on the
    best cell's out-of-fold decision values.

    ``y`` holds 1 for REAL and 0 for SPOOF.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n_samples, n_features) matching y")
    if not np.all(np.isfinite(X)):
        raise DegenerateData("non-finite feature values")
    counts = np.bincount(y, minlength=2)
    if counts.size != 2 or counts.min() == 0:
        raise DegenerateData("training data must contain both classes")
    if counts.min() < grid.folds:
        raise DegenerateData(f"need at least {grid.folds} examples per class, have {counts.tolist()}")

    std = X.std(axis=0)
    mask = std > 0
    if not mask.any():
        raise DegenerateData("every feature is constant")
    if not mask.all():
        logger.warning("dropping zero-variance features %s", np.flatnonzero(~mask).tolist())
    mean = X[:, mask].mean(axis=0)
    Z = (X[:, mask] - mean) / std[mask]

    ys = np.where(y == 1, 1.0, -1.0)
    cw = class_weights(y)
    sw = np.where(y == 1, cw[1], cw[0])
    # identical rows share a fold so duplicates cannot leak into validation
    _, row_group = np.unique(Z, axis=0, return_inverse=True)
    fold_of = stratified_folds(y, grid.folds, grid.seed, groups=row_group.ravel())

    table = []
    best = None  # (score, C, gamma, oof)
    for C in grid.C_values:
        for gamma in grid.gammas(Z.shape[1]):
            K = rbf_kernel(Z, Z, gamma) if Z.shape[0] <= 4000 else None
            oof = np.empty(y.size)
            scores = []
            for k in range(grid.folds):
                tr, te = fold_of != k, fold_of == k
                Ktr = K[np.ix_(tr, tr)] if K is not None else None
                svc = fit_svc(Z[tr], ys[tr], C, gamma, sw[tr], eps=eps, kernel=Ktr)
                oof[te] = svc.decision_function(Z[te])
                scores.append(balanced_accuracy(y[te], (oof[te] > 0).astype(np.int64)))
            score = float(np.mean(scores))
            table.append({"C": float(C), "gamma": float(gamma), "score": score})
            if best is None or score > best[0]:
                best = (score, float(C), float(gamma), oof)
            logger.debug("C=%g gamma=%g balanced accuracy %.4f", C, gamma, score)

    score, C, gamma, oof = best
    K = rbf_kernel(Z, Z, gamma) if Z.shape[0] <= 4000 else None
    svc = fit_svc(Z, ys, C, gamma, sw, eps=eps, kernel=K)
    A, B = fit_platt(oof, y)
    return TrainedDetector(
        support_vectors=svc.support_vectors,
        dual_coef=svc.dual_coef,
        rho=svc.rho,
        gamma=gamma,
        C=C,
        class_weights={"real": cw[1], "spoof": cw[0]},
        platt_a=A,
        platt_b=B,
        scale_mean=mean,
        scale_std=std[mask],
        feature_mask=mask,
        cv_score=score,
        cv_table=table,
        grid={
            "C_values": [float(c) for c in grid.C_values],
            "gamma_values": list(grid.gamma_values),
            "folds": grid.folds,
        },
        seed=grid.seed,
    )
