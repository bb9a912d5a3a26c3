"""Symbolic learners over structured lesion features."""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from ..core import LabeledExample
from ..errors import InvalidConfig
from ..io import ModelArtifact
from .baselines import (
    CrossValidationSummary,
    ForestModel,
    KnnModel,
    LogisticModel,
    cross_validate,
    fit_forest,
    fit_forest_arrays,
    fit_knn,
    fit_knn_arrays,
    fit_logistic,
    fit_logistic_arrays,
    logistic_loss_and_grad,
    predict_knn,
)
from .config import (
    TrainConfig,
    feature_matrix,
    feature_row,
    grade_array,
    resolve_schema,
    sample_weights,
    softmax,
    standardization,
)
from .gbm import GbmModel, fit_gbm, fit_gbm_arrays, multinomial_log_loss, weighted_log_priors

Model = Union[GbmModel, LogisticModel, ForestModel, KnnModel]

_MODEL_TYPES = {
    "gbm": GbmModel,
    "logistic": LogisticModel,
    "forest": ForestModel,
    "knn": KnnModel,
}


def fit_model(
    train: Sequence[LabeledExample],
    valid: Sequence[LabeledExample],
    cfg: TrainConfig,
) -> Model:
    """Train whichever learner the config names."""
    if cfg.model_kind == "gbm":
        return fit_gbm(train, valid, cfg)
    if cfg.model_kind == "logistic":
        return fit_logistic(train, cfg)
    if cfg.model_kind == "forest":
        return fit_forest(train, cfg)
    if cfg.model_kind == "knn":
        return fit_knn(train, cfg)
    raise InvalidConfig(f"unknown model_kind {cfg.model_kind!r}")


def fit_model_arrays(
    x: np.ndarray,
    y: np.ndarray,
    xv: np.ndarray,
    yv: np.ndarray,
    schema: tuple[str, ...],
    cfg: TrainConfig,
) -> Model:
    """Matrix-level dispatch (used when features were transformed)."""
    if cfg.model_kind == "gbm":
        return fit_gbm_arrays(x, y, xv, yv, schema, cfg)
    if cfg.model_kind == "logistic":
        return fit_logistic_arrays(x, y, schema, cfg)
    if cfg.model_kind == "forest":
        return fit_forest_arrays(x, y, schema, cfg)
    if cfg.model_kind == "knn":
        return fit_knn_arrays(x, y, schema, cfg)
    raise InvalidConfig(f"unknown model_kind {cfg.model_kind!r}")


def model_from_artifact(artifact: ModelArtifact) -> Model:
    """Rebuild a live model from its persisted form."""
    return _MODEL_TYPES[artifact.model_kind].from_artifact(artifact)


__all__ = [
    "CrossValidationSummary",
    "ForestModel",
    "GbmModel",
    "KnnModel",
    "LogisticModel",
    "Model",
    "TrainConfig",
    "cross_validate",
    "feature_matrix",
    "feature_row",
    "fit_forest",
    "fit_forest_arrays",
    "fit_gbm",
    "fit_gbm_arrays",
    "fit_knn",
    "fit_knn_arrays",
    "fit_logistic",
    "fit_logistic_arrays",
    "fit_model",
    "fit_model_arrays",
    "grade_array",
    "logistic_loss_and_grad",
    "model_from_artifact",
    "multinomial_log_loss",
    "predict_knn",
    "resolve_schema",
    "sample_weights",
    "softmax",
    "standardization",
    "weighted_log_priors",
]
