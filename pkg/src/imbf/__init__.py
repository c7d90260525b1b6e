"""Oversampling, k-means noise filtering and stacked ensembles for imbalanced fraud detection."""

__version__ = "0.1.0"

from .data import Dataset, inspect, load_csv, make_synthetic, standardize_fit_transform, stratified_kfold
from .ensemble import EnsembleSpec, StackedEnsemble, train_stacked_ensemble
from .evaluation import EvalReport, crossval_evaluate, roc_auc
from .learners import ClassifierSpec
from .resampling import ResamplePlan, SmoteConfig, smote_kmeans_resample

__all__ = [
    "ClassifierSpec",
    "Dataset",
    "EnsembleSpec",
    "EvalReport",
    "ResamplePlan",
    "SmoteConfig",
    "StackedEnsemble",
    "crossval_evaluate",
    "inspect",
    "load_csv",
    "make_synthetic",
    "roc_auc",
    "smote_kmeans_resample",
    "standardize_fit_transform",
    "stratified_kfold",
    "train_stacked_ensemble",
]
