from .calibration import fit_platt, platt_proba
from .model import (
    GridSpec,
    TrainedDetector,
    balanced_accuracy,
    class_weights,
    load_model,
    predict_proba,
    save_model,
    stratified_folds,
    train,
)
from .smote import smote
from .svm import RBFSVC, fit_svc, rbf_kernel, smo_solve

__all__ = [
    "GridSpec",
    "RBFSVC",
    "TrainedDetector",
    "balanced_accuracy",
    "class_weights",
    "fit_platt",
    "fit_svc",
    "load_model",
    "platt_proba",
    "predict_proba",
    "rbf_kernel",
    "save_model",
    "smo_solve",
    "smote",
    "stratified_folds",
    "train",
]
