"""Confidence fusion of the deep and knowledge branches.

Four strategies: selective (branch with the higher peak wins), global
max confidence, class-wise max, and weighted blending. Tie rules are
fixed so every strategy is a deterministic total function: the deep
branch wins cross-branch ties, and within a vector the lower grade wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .core import DRGrade, FusionWeights, ProbabilityVector
from .errors import InvalidConfig, UnknownImageId


class FusionSource(str, Enum):
    DEEP = "deep"
    SYMBOLIC = "symbolic"
    BLENDED = "blended"


class FusionStrategy(str, Enum):
    SELECTIVE = "selective"
    MAX_CONFIDENCE = "max"
    CLASSWISE_MAX = "classwise"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class FusedPrediction:
    grade: DRGrade
    source: FusionSource
    winning_score: float


def fuse_selective(p_dl: ProbabilityVector, p_kd: ProbabilityVector) -> FusedPrediction:
    """Whole-branch pick: the deep output when its peak confidence is at
    least the knowledge branch's, otherwise the knowledge output."""
    s_dl = p_dl.max_score()
    s_kd = p_kd.max_score()
    if s_dl >= s_kd:
        return FusedPrediction(DRGrade(p_dl.argmax()), FusionSource.DEEP, s_dl)
    return FusedPrediction(DRGrade(p_kd.argmax()), FusionSource.SYMBOLIC, s_kd)


def fuse_max_confidence(p_dl: ProbabilityVector, p_kd: ProbabilityVector) -> FusedPrediction:
    """The single globally most confident (source, grade) cell wins."""
    s_dl = p_dl.max_score()
    s_kd = p_kd.max_score()
    if s_dl >= s_kd:
        return FusedPrediction(DRGrade(p_dl.argmax()), FusionSource.DEEP, s_dl)
    return FusedPrediction(DRGrade(p_kd.argmax()), FusionSource.SYMBOLIC, s_kd)


def fuse_classwise_max(p_dl: ProbabilityVector, p_kd: ProbabilityVector) -> FusedPrediction:
    """Per-grade maximum across branches, then argmax over grades."""
    best_grade = 0
    best_score = -1.0
    best_source = FusionSource.DEEP
    for g in range(5):
        a, b = p_dl[g], p_kd[g]
        m = a if a >= b else b
        if m > best_score:
            best_score = m
            best_grade = g
            best_source = FusionSource.DEEP if a >= b else FusionSource.SYMBOLIC
    return FusedPrediction(DRGrade(best_grade), best_source, best_score)


def fuse_weighted(
    p_dl: ProbabilityVector, p_kd: ProbabilityVector, w: FusionWeights
) -> FusedPrediction:
    """Argmax of the weighted sum of both branches' confidences."""
    best_grade = 0
    best_score = -1.0
    for g in range(5):
        v = w.alpha_dl * p_dl[g] + w.alpha_kl * p_kd[g]
        if v > best_score:
            best_score = v
            best_grade = g
    return FusedPrediction(DRGrade(best_grade), FusionSource.BLENDED, best_score)


def fuse(
    strategy: FusionStrategy | str,
    p_dl: ProbabilityVector,
    p_kd: ProbabilityVector,
    weights: FusionWeights | None = None,
) -> FusedPrediction:
    strategy = FusionStrategy(strategy)
    if strategy is FusionStrategy.SELECTIVE:
        return fuse_selective(p_dl, p_kd)
    if strategy is FusionStrategy.MAX_CONFIDENCE:
        return fuse_max_confidence(p_dl, p_kd)
    if strategy is FusionStrategy.CLASSWISE_MAX:
        return fuse_classwise_max(p_dl, p_kd)
    if weights is None:
        raise InvalidConfig("weighted fusion needs FusionWeights")
    return fuse_weighted(p_dl, p_kd, weights)


def fused_probability(
    strategy: FusionStrategy | str,
    p_dl: ProbabilityVector,
    p_kd: ProbabilityVector,
    weights: FusionWeights | None = None,
) -> ProbabilityVector:
    """A probability row whose argmax matches the fusion decision, used to
    score fused predictions with rank metrics (AUC)."""
    strategy = FusionStrategy(strategy)
    if strategy in (FusionStrategy.SELECTIVE, FusionStrategy.MAX_CONFIDENCE):
        return p_dl if p_dl.max_score() >= p_kd.max_score() else p_kd
    if strategy is FusionStrategy.CLASSWISE_MAX:
        m = [max(p_dl[g], p_kd[g]) for g in range(5)]
        total = sum(m)
        return ProbabilityVector(tuple(v / total for v in m))  # type: ignore[arg-type]
    if weights is None:
        raise InvalidConfig("weighted fusion needs FusionWeights")
    total = weights.alpha_dl + weights.alpha_kl
    blended = tuple(
        (weights.alpha_dl * p_dl[g] + weights.alpha_kl * p_kd[g]) / total for g in range(5)
    )
    return ProbabilityVector(blended)  # type: ignore[arg-type]


def batch_fuse(
    strategy: FusionStrategy | str,
    dl_table: Mapping[str, ProbabilityVector],
    kd_table: Mapping[str, ProbabilityVector],
    weights: FusionWeights | None = None,
) -> dict[str, FusedPrediction]:
    """Fuse two image-indexed tables; both must cover the same images."""
    missing_kd = sorted(set(dl_table) - set(kd_table))
    missing_dl = sorted(set(kd_table) - set(dl_table))
    if missing_kd or missing_dl:
        sample = (missing_kd + missing_dl)[0]
        raise UnknownImageId(
            f"tables disagree on image ids (e.g. {sample!r}): "
            f"{len(missing_dl)} missing from deep, {len(missing_kd)} from symbolic"
        )
    return {
        image_id: fuse(strategy, dl_table[image_id], kd_table[image_id], weights)
        for image_id in dl_table
    }
