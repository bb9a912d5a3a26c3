"""kgdg: neuro-symbolic diabetic retinopathy grading and a
domain-generalization evaluation harness.

The package covers the decision layer only: it starts from lesion
detections / structured feature tables and neural-branch probability
tables, never from pixels.
"""

from .core import (
    GRADE_COUNT,
    LESIONS_ONLY_SCHEMA,
    LESIONS_VEIN_SCHEMA,
    BoundingBox,
    Detection,
    DomainDataset,
    DomainId,
    DRGrade,
    FeatureVector,
    FusionWeights,
    LabeledExample,
    LesionType,
    ProbabilityVector,
    validate_probability,
)
from .fusion import (
    FusedPrediction,
    FusionSource,
    FusionStrategy,
    batch_fuse,
    fuse,
    fuse_classwise_max,
    fuse_max_confidence,
    fuse_selective,
    fuse_weighted,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    FusionSpec,
    SplitFractions,
    align_domains,
    load_experiment_config,
    run_experiment,
    run_mdg,
    run_sdg,
    select_weights,
    split_dataset,
)
from .learn import TrainConfig, cross_validate, fit_gbm, fit_model, predict_knn
from .metrics import (
    DomainStats,
    MetricReport,
    accuracy,
    auc_ovr_macro,
    detection_set_iou,
    domain_kl,
    evaluate_predictions,
    iou,
    macro_f1,
    seeded_summary,
)
from .report import compare_to_reference, emit_report, get_reference, reference_ids
from .rules import (
    RuleConfig,
    RuleTrace,
    aggregate_detections,
    assign_quadrant,
    grade_by_rules,
    rule_grade_as_probability,
)
from .synth import DomainSpec, SynthConfig, gen_dataset, shift_profile, simulate_neural_table, write_dataset

__version__ = "0.1.0"

__all__ = [
    "GRADE_COUNT",
    "LESIONS_ONLY_SCHEMA",
    "LESIONS_VEIN_SCHEMA",
    "BoundingBox",
    "Detection",
    "DomainDataset",
    "DomainId",
    "DomainSpec",
    "DomainStats",
    "DRGrade",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureVector",
    "FusedPrediction",
    "FusionSource",
    "FusionSpec",
    "FusionStrategy",
    "FusionWeights",
    "LabeledExample",
    "LesionType",
    "MetricReport",
    "ProbabilityVector",
    "RuleConfig",
    "RuleTrace",
    "SplitFractions",
    "SynthConfig",
    "TrainConfig",
    "accuracy",
    "aggregate_detections",
    "align_domains",
    "assign_quadrant",
    "auc_ovr_macro",
    "batch_fuse",
    "compare_to_reference",
    "cross_validate",
    "detection_set_iou",
    "domain_kl",
    "emit_report",
    "evaluate_predictions",
    "fit_gbm",
    "fit_model",
    "fuse",
    "fuse_classwise_max",
    "fuse_max_confidence",
    "fuse_selective",
    "fuse_weighted",
    "gen_dataset",
    "get_reference",
    "grade_by_rules",
    "iou",
    "load_experiment_config",
    "macro_f1",
    "predict_knn",
    "reference_ids",
    "rule_grade_as_probability",
    "run_experiment",
    "run_mdg",
    "run_sdg",
    "seeded_summary",
    "select_weights",
    "shift_profile",
    "simulate_neural_table",
    "split_dataset",
    "validate_probability",
    "write_dataset",
]
