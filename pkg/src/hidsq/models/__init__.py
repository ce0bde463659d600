"""The eight classical detectors behind one fit / predict / score contract."""

from . import gnb, kmeans, knn, logreg, mlp, svm, tree  # noqa: F401  (registration)
from .base import (
    REGISTRY,
    ConvergenceWarning,
    FittedModel,
    ModelSpec,
    TrainingSummary,
    fit,
    load_model,
    predict,
    resolve_hyperparams,
    save_model,
    score,
)
from .svm import kernel_poly
from .tree import gini_impurity

MODEL_KINDS = ("kmeans", "logreg", "svm_poly", "mlp", "dtree", "rforest", "knn", "gnb")

__all__ = [
    "MODEL_KINDS",
    "REGISTRY",
    "ConvergenceWarning",
    "FittedModel",
    "ModelSpec",
    "TrainingSummary",
    "fit",
    "gini_impurity",
    "kernel_poly",
    "load_model",
    "predict",
    "resolve_hyperparams",
    "save_model",
    "score",
]
