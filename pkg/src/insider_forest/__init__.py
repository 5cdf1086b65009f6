"""Insider-trade classification with PCA and a from-scratch random forest."""

from .dataset import Dataset, FeatureSchema, FeatureSpec, generate_synthetic
from .errors import ConfigError, DataError, InsiderForestError, NumericError
from .evaluate import ConfusionMatrix, MetricsReport, SearchSpace, confusion_matrix, metrics, pr_auc, roc_auc
from .experiment import ExperimentConfig, run_experiments
from .forest import HyperParams, RandomForestModel, fit_forest, oob_error, predict, predict_batch
from .pca import PcaModel, fit_pca, select_components, transform

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConfusionMatrix", "DataError", "Dataset", "ExperimentConfig", "FeatureSchema",
    "FeatureSpec", "HyperParams", "InsiderForestError", "MetricsReport", "NumericError", "PcaModel",
    "RandomForestModel", "SearchSpace", "confusion_matrix", "fit_forest", "fit_pca", "generate_synthetic",
    "metrics", "oob_error", "pr_auc", "predict", "predict_batch", "roc_auc", "run_experiments",
    "select_components", "transform",
]
