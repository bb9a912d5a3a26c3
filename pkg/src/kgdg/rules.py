"""Deterministic clinical grading rules over symbolic lesion features.

The rule set encodes the standard severity ladder: neovascular findings
dominate (proliferative disease), widespread hemorrhages mark severe
NPDR, cotton-wool spots and exudates mark moderate disease, and isolated
microaneurysms mark mild disease. Rules fire in priority order; the
first match wins, so adding findings can never lower the grade.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import (
    BoundingBox,
    Detection,
    DRGrade,
    FeatureVector,
    LesionType,
    ProbabilityVector,
)
from .errors import InvalidConfig


@dataclass(frozen=True)
class RuleConfig:
    """Thresholds the clinical ladder leaves open; all overridable."""

    cws_severe_threshold: int = 5
    min_score: float = 0.25
    smoothing: float = 0.1

    def __post_init__(self) -> None:
        if self.cws_severe_threshold < 1:
            raise InvalidConfig("cws_severe_threshold must be >= 1")
        if not (0.0 <= self.min_score <= 1.0):
            raise InvalidConfig("min_score must be in [0,1]")
        if not (0.0 <= self.smoothing < 1.0):
            raise InvalidConfig("smoothing must be in [0,1)")


DEFAULT_RULES = RuleConfig()


@dataclass(frozen=True)
class RuleTrace:
    """Grading outcome plus the rule that produced it."""

    fired_rules: tuple[str, ...]
    grade: DRGrade

    def __post_init__(self) -> None:
        if not self.fired_rules:
            raise ValueError("fired_rules must be nonempty")


def assign_quadrant(box: BoundingBox) -> int:
    """Quadrant of the box center: 1=top-left, 2=top-right, 3=bottom-left,
    4=bottom-right. Centers exactly on an axis go to the lower-numbered
    quadrant."""
    cx, cy = box.center
    left = cx <= 0.5
    top = cy <= 0.5
    if top:
        return 1 if left else 2
    return 3 if left else 4


_COUNT_FIELDS = {
    LesionType.MICROANEURYSM: "microaneurysm_count",
    LesionType.HARD_EXUDATE: "exudate_count",
    LesionType.HARD_HEMORRHAGE: "hard_hemorrhage_count",
    LesionType.SOFT_HEMORRHAGE: "soft_hemorrhage_count",
    LesionType.COTTON_WOOL_SPOT: "cotton_wool_count",
}


def aggregate_detections(dets: Iterable[Detection], min_score: float = DEFAULT_RULES.min_score) -> FeatureVector:
    """Collapse detections at or above ``min_score`` into a FeatureVector.

    Hemorrhage quadrant spread counts hard and soft hemorrhages together;
    vein fields are never produced here (they come from vessel maps, not
    detections).
    """
    if not (0.0 <= min_score <= 1.0):
        raise InvalidConfig(f"min_score={min_score!r} outside [0,1]")
    counts: dict[str, int] = defaultdict(int)
    quadrants: set[int] = set()
    subhyaloid = False
    neovasc = False
    for det in dets:
        if det.score < min_score:
            continue
        if det.lesion in _COUNT_FIELDS:
            counts[_COUNT_FIELDS[det.lesion]] += 1
        if det.lesion in (LesionType.HARD_HEMORRHAGE, LesionType.SOFT_HEMORRHAGE):
            quadrants.add(assign_quadrant(det.box))
        elif det.lesion is LesionType.SUBHYALOID_HEMORRHAGE:
            subhyaloid = True
        elif det.lesion is LesionType.NEOVASCULARIZATION:
            neovasc = True
    return FeatureVector(
        microaneurysm_count=counts["microaneurysm_count"],
        exudate_count=counts["exudate_count"],
        hard_hemorrhage_count=counts["hard_hemorrhage_count"],
        soft_hemorrhage_count=counts["soft_hemorrhage_count"],
        cotton_wool_count=counts["cotton_wool_count"],
        subhyaloid_present=subhyaloid,
        neovascularization_present=neovasc,
        hemorrhage_quadrants=len(quadrants),
    )


def grade_by_rules(f: FeatureVector, cfg: RuleConfig = DEFAULT_RULES) -> RuleTrace:
    """Grade a feature vector; the first matching rule decides.

    R1 neovascularization -> PDR            R5 any cotton-wool spot -> Moderate
    R2 subhyaloid hemorrhage -> PDR         R6 exudate or hemorrhage -> Moderate
    R3 >20 hemorrhages in all 4 quadrants   R7 any microaneurysm -> Mild
       -> Severe                            R8 no findings -> No DR
    R4 cotton-wool count at threshold -> Severe
    """
    hemorrhages = f.hard_hemorrhage_count + f.soft_hemorrhage_count
    if f.neovascularization_present:
        return RuleTrace(("R1",), DRGrade.PDR)
    if f.subhyaloid_present:
        return RuleTrace(("R2",), DRGrade.PDR)
    if hemorrhages > 20 and f.hemorrhage_quadrants == 4:
        return RuleTrace(("R3",), DRGrade.SEVERE)
    if f.cotton_wool_count >= cfg.cws_severe_threshold:
        return RuleTrace(("R4",), DRGrade.SEVERE)
    if f.cotton_wool_count >= 1:
        return RuleTrace(("R5",), DRGrade.MODERATE)
    if f.exudate_count >= 1 or hemorrhages >= 1:
        return RuleTrace(("R6",), DRGrade.MODERATE)
    if f.microaneurysm_count >= 1:
        return RuleTrace(("R7",), DRGrade.MILD)
    return RuleTrace(("R8",), DRGrade.NO_DR)


def rule_grade_as_probability(trace: RuleTrace, smoothing: float = DEFAULT_RULES.smoothing) -> ProbabilityVector:
    """Turn a deterministic rule grade into a distribution so it can join
    confidence fusion: 1-smoothing on the graded class, smoothing/4 on each
    other class."""
    if not (0.0 <= smoothing < 1.0):
        raise InvalidConfig(f"smoothing={smoothing!r} outside [0,1)")
    off = smoothing / 4.0
    probs = tuple(
        1.0 - smoothing if g == int(trace.grade) else off for g in range(5)
    )
    return ProbabilityVector(probs)  # type: ignore[arg-type]


def grade_detections(
    dets: Sequence[Detection], cfg: RuleConfig = DEFAULT_RULES
) -> tuple[FeatureVector, RuleTrace]:
    """Aggregate then grade in one step (per-image pipeline entry point)."""
    features = aggregate_detections(dets, cfg.min_score)
    return features, grade_by_rules(features, cfg)
