"""The non-boosting symbolic learners: multinomial logistic regression,
bagged randomized trees, and k-nearest neighbors, plus stratified
cross-validation over any learner kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..core import GRADE_COUNT, FeatureVector, LabeledExample, ProbabilityVector
from ..errors import InvalidConfig, SchemaMismatch, TooFewPerClass
from ..io import ModelArtifact
from ..metrics import accuracy as accuracy_metric
from ..metrics import macro_f1 as macro_f1_metric
from ..metrics import seeded_summary
from .config import (
    TrainConfig,
    feature_matrix,
    feature_row,
    grade_array,
    resolve_schema,
    sample_weights,
    softmax,
    standardization,
    train_fingerprint,
)
from .tree import fit_classification_tree, predict_tree


def _to_probability(row: np.ndarray) -> ProbabilityVector:
    return ProbabilityVector(tuple(float(p) for p in row))  # type: ignore[arg-type]


# --- multinomial logistic regression ------------------------------------------


def logistic_loss_and_grad(
    w: np.ndarray,
    b: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted-mean cross-entropy of softmax(x w^T + b) and its gradients."""
    probs = softmax(x @ w.T + b)
    picked = np.clip(probs[np.arange(y.size), y], 1e-300, None)
    total = weights.sum()
    loss = float(-(weights * np.log(picked)).sum() / total)
    delta = probs.copy()
    delta[np.arange(y.size), y] -= 1.0
    delta *= (weights / total)[:, None]
    return loss, delta.T @ x, delta.sum(axis=0)


@dataclass
class LogisticModel:
    feature_schema: tuple[str, ...]
    weights: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    train_fingerprint: str

    def predict_proba_matrix(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != len(self.feature_schema):
            raise SchemaMismatch(
                f"model expects {len(self.feature_schema)} features, got {x.shape[1]}"
            )
        xs = (x - self.mean) / self.std
        return softmax(xs @ self.weights.T + self.bias)

    def predict_proba(self, fv: FeatureVector) -> ProbabilityVector:
        row = feature_row(fv, self.feature_schema)
        return _to_probability(self.predict_proba_matrix(row[None, :])[0])

    def to_artifact(self) -> ModelArtifact:
        return ModelArtifact(
            model_kind="logistic",
            feature_schema=self.feature_schema,
            params={
                "n_features": len(self.feature_schema),
                "weights": self.weights.tolist(),
                "bias": self.bias.tolist(),
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
            },
            train_fingerprint=self.train_fingerprint,
        )

    @classmethod
    def from_artifact(cls, artifact: ModelArtifact) -> "LogisticModel":
        p = artifact.params
        return cls(
            feature_schema=tuple(artifact.feature_schema),
            weights=np.asarray(p["weights"], dtype=np.float64),
            bias=np.asarray(p["bias"], dtype=np.float64),
            mean=np.asarray(p["mean"], dtype=np.float64),
            std=np.asarray(p["std"], dtype=np.float64),
            train_fingerprint=artifact.train_fingerprint,
        )


def fit_logistic(train: Sequence[LabeledExample], cfg: TrainConfig) -> LogisticModel:
    """Full-batch gradient descent from a zero init on standardized inputs.

    A single-grade training set is allowed: the fit degenerates to always
    predicting that grade.
    """
    schema = resolve_schema(cfg, train)
    return fit_logistic_arrays(feature_matrix(train, schema), grade_array(train), schema, cfg)


def fit_logistic_arrays(
    x: np.ndarray, y: np.ndarray, schema: tuple[str, ...], cfg: TrainConfig
) -> LogisticModel:
    mu, sd = standardization(x)
    xs = (x - mu) / sd
    weights = sample_weights(y, cfg.class_weighting)
    w = np.zeros((GRADE_COUNT, x.shape[1]), dtype=np.float64)
    b = np.zeros(GRADE_COUNT, dtype=np.float64)
    for _ in range(cfg.logistic_steps):
        _, gw, gb = logistic_loss_and_grad(w, b, xs, y, weights)
        w -= cfg.logistic_lr * gw
        b -= cfg.logistic_lr * gb
    return LogisticModel(
        feature_schema=schema,
        weights=w,
        bias=b,
        mean=mu,
        std=sd,
        train_fingerprint=train_fingerprint(cfg, schema, x, y),
    )


# --- bagged randomized trees ---------------------------------------------------


@dataclass
class ForestModel:
    feature_schema: tuple[str, ...]
    trees: list[dict[str, Any]]
    train_fingerprint: str

    def predict_proba_matrix(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != len(self.feature_schema):
            raise SchemaMismatch(
                f"model expects {len(self.feature_schema)} features, got {x.shape[1]}"
            )
        acc = np.zeros((x.shape[0], GRADE_COUNT), dtype=np.float64)
        for tree in self.trees:
            acc += predict_tree(tree, x)
        return acc / len(self.trees)

    def predict_proba(self, fv: FeatureVector) -> ProbabilityVector:
        row = feature_row(fv, self.feature_schema)
        return _to_probability(self.predict_proba_matrix(row[None, :])[0])

    def to_artifact(self) -> ModelArtifact:
        return ModelArtifact(
            model_kind="forest",
            feature_schema=self.feature_schema,
            params={
                "n_features": len(self.feature_schema),
                "trees": self.trees,
            },
            train_fingerprint=self.train_fingerprint,
        )

    @classmethod
    def from_artifact(cls, artifact: ModelArtifact) -> "ForestModel":
        return cls(
            feature_schema=tuple(artifact.feature_schema),
            trees=artifact.params["trees"],
            train_fingerprint=artifact.train_fingerprint,
        )


def fit_forest(train: Sequence[LabeledExample], cfg: TrainConfig) -> ForestModel:
    """Per-tree bootstrap plus random feature subsets at every split;
    probabilities are averaged leaf grade frequencies."""
    schema = resolve_schema(cfg, train)
    return fit_forest_arrays(feature_matrix(train, schema), grade_array(train), schema, cfg)


def fit_forest_arrays(
    x: np.ndarray, y: np.ndarray, schema: tuple[str, ...], cfg: TrainConfig
) -> ForestModel:
    if cfg.n_trees < 1:
        raise InvalidConfig("forest needs n_trees >= 1")
    max_features = cfg.max_features or max(1, math.isqrt(x.shape[1]))
    root = np.random.SeedSequence(cfg.seed)
    trees = []
    for child in root.spawn(cfg.n_trees):
        rng = np.random.Generator(np.random.PCG64(child))
        rows = rng.integers(0, x.shape[0], size=x.shape[0]) if cfg.bootstrap else np.arange(x.shape[0])
        trees.append(
            fit_classification_tree(x[rows], y[rows], rng, cfg.max_depth, cfg.min_leaf, max_features)
        )
    return ForestModel(
        feature_schema=schema,
        trees=trees,
        train_fingerprint=train_fingerprint(cfg, schema, x, y),
    )


# --- k-nearest neighbors ------------------------------------------------------


@dataclass
class KnnModel:
    feature_schema: tuple[str, ...]
    points: np.ndarray
    grades: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    k: int
    train_fingerprint: str

    def predict_proba_matrix(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != len(self.feature_schema):
            raise SchemaMismatch(
                f"model expects {len(self.feature_schema)} features, got {x.shape[1]}"
            )
        xs = (x - self.mean) / self.std
        out = np.zeros((x.shape[0], GRADE_COUNT), dtype=np.float64)
        for i in range(xs.shape[0]):
            dists = np.sqrt(((self.points - xs[i]) ** 2).sum(axis=1))
            nearest = np.argsort(dists, kind="stable")[: self.k]
            counts = np.bincount(self.grades[nearest], minlength=GRADE_COUNT)
            out[i] = counts / self.k
        return out

    def predict_proba(self, fv: FeatureVector) -> ProbabilityVector:
        row = feature_row(fv, self.feature_schema)
        return _to_probability(self.predict_proba_matrix(row[None, :])[0])

    def to_artifact(self) -> ModelArtifact:
        return ModelArtifact(
            model_kind="knn",
            feature_schema=self.feature_schema,
            params={
                "n_features": len(self.feature_schema),
                "points": self.points.tolist(),
                "grades": self.grades.tolist(),
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
                "k": self.k,
            },
            train_fingerprint=self.train_fingerprint,
        )

    @classmethod
    def from_artifact(cls, artifact: ModelArtifact) -> "KnnModel":
        p = artifact.params
        return cls(
            feature_schema=tuple(artifact.feature_schema),
            points=np.asarray(p["points"], dtype=np.float64),
            grades=np.asarray(p["grades"], dtype=np.int64),
            mean=np.asarray(p["mean"], dtype=np.float64),
            std=np.asarray(p["std"], dtype=np.float64),
            k=int(p["k"]),
            train_fingerprint=artifact.train_fingerprint,
        )


def fit_knn(train: Sequence[LabeledExample], cfg: TrainConfig) -> KnnModel:
    """Store standardized training points; neighbors vote by grade frequency.

    Distance ties resolve by training-row order, so predictions are
    deterministic.
    """
    schema = resolve_schema(cfg, train)
    return fit_knn_arrays(feature_matrix(train, schema), grade_array(train), schema, cfg)


def fit_knn_arrays(
    x: np.ndarray, y: np.ndarray, schema: tuple[str, ...], cfg: TrainConfig
) -> KnnModel:
    if cfg.k_neighbors > x.shape[0]:
        raise InvalidConfig(
            f"k_neighbors={cfg.k_neighbors} exceeds the {x.shape[0]} training points"
        )
    mu, sd = standardization(x)
    return KnnModel(
        feature_schema=schema,
        points=(x - mu) / sd,
        grades=y,
        mean=mu,
        std=sd,
        k=cfg.k_neighbors,
        train_fingerprint=train_fingerprint(cfg, schema, x, y),
    )


def predict_knn(
    train: Sequence[LabeledExample], fv: FeatureVector, cfg: TrainConfig
) -> ProbabilityVector:
    """One-shot lazy kNN prediction (fit + query)."""
    return fit_knn(train, cfg).predict_proba(fv)


# --- cross-validation -------------------------------------------------------------


@dataclass(frozen=True)
class CrossValidationSummary:
    per_fold_accuracy: tuple[float, ...]
    per_fold_macro_f1: tuple[float, ...]
    accuracy_mean: float
    accuracy_std: float
    macro_f1_mean: float
    macro_f1_std: float


def cross_validate(
    data: Sequence[LabeledExample], cfg: TrainConfig, folds: int
) -> CrossValidationSummary:
    """Stratified k-fold evaluation of the configured learner."""
    from . import fit_model  # local import to avoid a cycle

    if folds < 2:
        raise InvalidConfig("folds must be >= 2")
    y = grade_array(data)
    counts = np.bincount(y, minlength=GRADE_COUNT)
    thin = [g for g in range(GRADE_COUNT) if 0 < counts[g] < folds]
    if thin:
        raise TooFewPerClass(f"grades {thin} have fewer than {folds} examples")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    fold_of = np.empty(len(data), dtype=np.int64)
    for g in range(GRADE_COUNT):
        idx = np.nonzero(y == g)[0]
        rng.shuffle(idx)
        fold_of[idx] = np.arange(idx.size) % folds
    accs, f1s = [], []
    for k in range(folds):
        train = [ex for i, ex in enumerate(data) if fold_of[i] != k]
        test = [ex for i, ex in enumerate(data) if fold_of[i] == k]
        model = fit_model(train, train, cfg)
        preds = [model.predict_proba(ex.features).argmax() for ex in test]
        truth = [int(ex.grade) for ex in test]
        accs.append(accuracy_metric(truth, preds))
        f1s.append(macro_f1_metric(truth, preds))
    acc_mean, acc_std = seeded_summary(accs)
    f1_mean, f1_std = seeded_summary(f1s)
    return CrossValidationSummary(
        per_fold_accuracy=tuple(accs),
        per_fold_macro_f1=tuple(f1s),
        accuracy_mean=acc_mean,
        accuracy_std=acc_std,
        macro_f1_mean=f1_mean,
        macro_f1_std=f1_std,
    )
