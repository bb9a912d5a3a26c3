"""Evaluation metrics: accuracy, macro F1, one-vs-rest AUC, box IoU,
greedy detection matching, and the Gaussian-summary KL shift diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import GRADE_COUNT, BoundingBox, Detection, ProbabilityVector
from .errors import EmptyEvaluation, NoQualifyingClass, SchemaMismatch

VARIANCE_FLOOR = 1e-6


def _as_grade_array(values: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray([int(v) for v in values], dtype=np.int64)
    if arr.size == 0:
        raise EmptyEvaluation(f"{name} is empty")
    if arr.min() < 0 or arr.max() >= GRADE_COUNT:
        raise ValueError(f"{name} contains grades outside 0..{GRADE_COUNT - 1}")
    return arr


def accuracy(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """Fraction of exact grade matches."""
    t = _as_grade_array(y_true, "y_true")
    p = _as_grade_array(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ValueError("y_true and y_pred lengths differ")
    return float(np.mean(t == p))


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int]) -> np.ndarray:
    """5x5 count matrix, rows = true grade, columns = predicted grade."""
    t = _as_grade_array(y_true, "y_true")
    p = _as_grade_array(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ValueError("y_true and y_pred lengths differ")
    cm = np.zeros((GRADE_COUNT, GRADE_COUNT), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def macro_f1(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """Mean per-grade F1 over the grades present in y_true.

    Undefined precision or recall counts as 0 for that grade.
    """
    cm = confusion_matrix(y_true, y_pred)
    support = cm.sum(axis=1)
    f1s = []
    for g in range(GRADE_COUNT):
        if support[g] == 0:
            continue
        tp = cm[g, g]
        fp = cm[:, g].sum() - tp
        fn = support[g] - tp
        denom = 2 * tp + fp + fn
        f1s.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(f1s))


def _tie_averaged_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied scores assigned the mean of their ranks."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def binary_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Rank-statistic AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise NoQualifyingClass("binary AUC needs both positives and negatives")
    ranks = _tie_averaged_ranks(s)
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_ovr_macro(
    y_true: Sequence[int], prob_rows: Sequence[ProbabilityVector | Sequence[float]]
) -> float:
    """One-vs-rest AUC averaged over grades that have both positives and
    negatives in y_true."""
    t = _as_grade_array(y_true, "y_true")
    mat = np.asarray([tuple(row) for row in prob_rows], dtype=np.float64)
    if mat.shape != (t.size, GRADE_COUNT):
        raise ValueError(f"prob_rows shape {mat.shape} does not match {t.size} labels")
    aucs = []
    for g in range(GRADE_COUNT):
        mask = (t == g).astype(np.int64)
        n_pos = int(mask.sum())
        if n_pos == 0 or n_pos == t.size:
            continue
        aucs.append(binary_auc(mask, mat[:, g]))
    if not aucs:
        raise NoQualifyingClass("no grade has both positives and negatives")
    return float(np.mean(aucs))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two normalized boxes.

    Areas use the same edge arithmetic as the intersection so identical
    boxes give exactly 1.0.
    """
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    ix = max(0.0, min(ax2, bx2) - max(a.x, b.x))
    iy = max(0.0, min(ay2, by2) - max(a.y, b.y))
    inter = ix * iy
    area_a = (ax2 - a.x) * (ay2 - a.y)
    area_b = (bx2 - b.x) * (by2 - b.y)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class DetectionMatchReport:
    """Outcome of greedy box matching between predictions and ground truth."""

    matched_per_lesion: dict[str, int]
    matched_total: int
    mean_matched_iou: float
    precision: float
    recall: float


def detection_set_iou(
    pred: Sequence[Detection], truth: Sequence[Detection], iou_threshold: float = 0.5
) -> DetectionMatchReport:
    """Greedy matching per lesion type, highest predicted score first.

    Each truth box matches at most once; among unmatched truths the
    candidate with the highest IoU wins (earliest on exact ties). A match
    requires IoU >= ``iou_threshold``.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold={iou_threshold!r} outside [0,1]")
    per_lesion: dict[str, int] = {}
    matched_ious: list[float] = []
    for kind in sorted({d.lesion for d in pred} | {d.lesion for d in truth}, key=lambda k: k.value):
        preds = sorted(
            (d for d in pred if d.lesion == kind),
            key=lambda d: -d.score,
        )
        truths = [d for d in truth if d.lesion == kind]
        taken = [False] * len(truths)
        n_matched = 0
        for p in preds:
            best_iou = -1.0
            best_j = -1
            for j, tr in enumerate(truths):
                if taken[j]:
                    continue
                v = iou(p.box, tr.box)
                if v > best_iou:
                    best_iou = v
                    best_j = j
            if best_j >= 0 and best_iou >= iou_threshold:
                taken[best_j] = True
                n_matched += 1
                matched_ious.append(best_iou)
        per_lesion[kind.value] = n_matched
    total = sum(per_lesion.values())
    precision = total / len(pred) if pred else 1.0
    recall = total / len(truth) if truth else 1.0
    mean_iou = float(np.mean(matched_ious)) if matched_ious else 0.0
    return DetectionMatchReport(per_lesion, total, mean_iou, precision, recall)


@dataclass(frozen=True)
class DomainStats:
    """Per-feature Gaussian summary (mean, floored variance) of a domain."""

    mean: tuple[float, ...]
    variance: tuple[float, ...]
    n: int

    def __post_init__(self) -> None:
        if len(self.mean) != len(self.variance):
            raise ValueError("mean and variance arity differ")
        if any(v < VARIANCE_FLOOR for v in self.variance):
            raise ValueError(f"variance below floor {VARIANCE_FLOOR}")

    @classmethod
    def from_matrix(cls, x: np.ndarray) -> "DomainStats":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("need a nonempty 2-D feature matrix")
        mean = x.mean(axis=0)
        var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
        return cls(tuple(mean.tolist()), tuple(var.tolist()), x.shape[0])


def domain_kl(p: DomainStats, q: DomainStats) -> float:
    """Closed-form KL(p || q) between independent-coordinate Gaussian
    summaries: sum over features of
    (var_p/var_q + (mu_q-mu_p)^2/var_q - 1 + ln(var_q/var_p)) / 2.
    """
    if len(p.mean) != len(q.mean):
        raise SchemaMismatch("domain stats have different feature arity")
    mp = np.asarray(p.mean)
    mq = np.asarray(q.mean)
    vp = np.asarray(p.variance)
    vq = np.asarray(q.variance)
    terms = 0.5 * (vp / vq + (mq - mp) ** 2 / vq - 1.0 + np.log(vq / vp))
    return float(terms.sum())


def seeded_summary(per_seed_values: Sequence[float]) -> tuple[float, float]:
    """(mean, population std) across repeated seeded runs."""
    vals = np.asarray(per_seed_values, dtype=np.float64)
    if vals.size == 0:
        raise EmptyEvaluation("no per-seed values")
    return float(vals.mean()), float(vals.std())


@dataclass(frozen=True)
class MetricReport:
    """Bundle of classification metrics over one evaluation set."""

    accuracy: float
    macro_f1: float
    auc_ovr_macro: float | None
    confusion: tuple[tuple[int, ...], ...]
    support: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        cm = np.asarray(self.confusion)
        if cm.shape != (GRADE_COUNT, GRADE_COUNT):
            raise ValueError("confusion matrix must be 5x5")
        if tuple(int(v) for v in cm.sum(axis=1)) != tuple(self.support):
            raise ValueError("confusion row sums must equal support")
        total = cm.sum()
        if total and abs(self.accuracy - np.trace(cm) / total) > 1e-12:
            raise ValueError("accuracy must equal confusion trace / total")


def evaluate_predictions(
    y_true: Sequence[int],
    y_pred: Sequence[int],
    prob_rows: Sequence[ProbabilityVector | Sequence[float]] | None = None,
) -> MetricReport:
    """Compute the full metric bundle; AUC only when prob rows are given
    and at least one grade qualifies."""
    cm = confusion_matrix(y_true, y_pred)
    auc: float | None = None
    if prob_rows is not None:
        try:
            auc = auc_ovr_macro(y_true, prob_rows)
        except NoQualifyingClass:
            auc = None
    return MetricReport(
        accuracy=accuracy(y_true, y_pred),
        macro_f1=macro_f1(y_true, y_pred),
        auc_ovr_macro=auc,
        confusion=tuple(tuple(int(v) for v in row) for row in cm),
        support=tuple(int(v) for v in cm.sum(axis=1)),
    )
