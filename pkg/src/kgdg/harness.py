"""Single- and multi-domain generalization experiments.

A run trains the symbolic branch on source-domain splits (60/20/20 by
default, stratified per grade), optionally standardizes every domain
onto a reference domain's feature statistics, evaluates symbolic-only,
neural-only, and fused predictions on each held-out domain's full data,
and aggregates per-seed metrics into benchmark-style mean +/- std tables.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .core import (
    DomainDataset,
    DomainId,
    FusionWeights,
    LabeledExample,
    ProbabilityVector,
)
from .errors import (
    InvalidConfig,
    LeakageError,
    MissingProbabilityTable,
    NoQualifyingClass,
)
from .fusion import FusionStrategy, fuse, fused_probability
from .io import Manifest, canonical_json, content_digest, file_digest, load_domain_dataset
from .learn import TrainConfig, feature_matrix, fit_model_arrays, grade_array, resolve_schema
from .metrics import (
    DomainStats,
    accuracy,
    auc_ovr_macro,
    domain_kl,
    macro_f1,
    seeded_summary,
)
from .rules import RuleConfig

DEFAULT_WEIGHT_GRID: tuple[tuple[float, float], ...] = tuple(
    (round(a / 10, 1), round(1 - a / 10, 1)) for a in range(9, 0, -1)
)

FUSION_MAPPING_NOTE = (
    'row mapping: "Non Weighted (DL + KL)" = max-confidence fusion; '
    '"Weighted (DL + KL)" = weighted fusion with the blend searched on the '
    "source validation split; ties go to the deep branch, and within one "
    "vector to the lower grade."
)


@dataclass(frozen=True)
class SplitFractions:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2

    def __post_init__(self) -> None:
        parts = (self.train, self.validation, self.test)
        if any(p < 0 for p in parts):
            raise InvalidConfig("split fractions must be nonnegative")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise InvalidConfig("split fractions must sum to 1")


@dataclass(frozen=True)
class FusionSpec:
    """Which decision rows an experiment evaluates beyond symbolic-only."""

    strategies: tuple[str, ...] = ("selective", "max", "classwise", "weighted")
    include_neural: bool = True
    alpha_dl: float | None = None
    alpha_kl: float | None = None
    grid: bool = True

    def __post_init__(self) -> None:
        for s in self.strategies:
            FusionStrategy(s)
        fixed = (self.alpha_dl is None, self.alpha_kl is None)
        if fixed[0] != fixed[1]:
            raise InvalidConfig("alpha_dl and alpha_kl must be set together")

    def fixed_weights(self) -> FusionWeights | None:
        if self.alpha_dl is None:
            return None
        return FusionWeights(self.alpha_dl, self.alpha_kl)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "sdg"
    source: str | None = None
    targets: tuple[str, ...] | None = None
    seeds: tuple[int, ...] = (0, 1, 2)
    split: SplitFractions = field(default_factory=SplitFractions)
    symbolic: TrainConfig = field(default_factory=TrainConfig)
    fusion: FusionSpec = field(default_factory=FusionSpec)
    rules: RuleConfig = field(default_factory=RuleConfig)
    alignment: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("sdg", "mdg"):
            raise InvalidConfig(f"mode must be sdg or mdg, got {self.mode!r}")
        if not self.seeds:
            raise InvalidConfig("seeds must be nonempty")
        if self.mode == "sdg" and not self.source:
            raise InvalidConfig("sdg mode needs a source domain")

    def as_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "source": self.source,
            "targets": list(self.targets) if self.targets else None,
            "seeds": list(self.seeds),
            "split": asdict(self.split),
            "symbolic": self.symbolic.as_dict(),
            "fusion": asdict(self.fusion),
            "rules": asdict(self.rules),
            "alignment": self.alignment,
        }


@dataclass(frozen=True)
class CellStat:
    mean: float
    std: float
    n_seeds: int


@dataclass
class ExperimentReport:
    """Per (method, target) mean +/- std over seeds, plus run provenance."""

    mode: str
    source_label: str
    columns: tuple[str, ...]
    methods: tuple[str, ...]
    metrics: tuple[str, ...]
    cells: dict[str, dict[str, dict[str, CellStat]]]
    raw: dict[str, dict[str, dict[str, tuple[float, ...]]]]
    seeds: tuple[int, ...]
    config_fingerprint: str
    fusion_note: str
    aggregation: str = "seeds"
    alignment_enabled: bool = False
    kl_before: float | None = None
    kl_after: float | None = None
    selected_alphas: tuple[float, ...] = ()

    def cell(self, method: str, column: str, metric: str = "accuracy") -> CellStat:
        return self.cells[method][column][metric]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "source_label": self.source_label,
            "columns": list(self.columns),
            "methods": list(self.methods),
            "metrics": list(self.metrics),
            "cells": {
                m: {
                    c: {k: [v.mean, v.std, v.n_seeds] for k, v in col.items()}
                    for c, col in cols.items()
                }
                for m, cols in self.cells.items()
            },
            "raw": {
                m: {c: {k: list(v) for k, v in col.items()} for c, col in cols.items()}
                for m, cols in self.raw.items()
            },
            "seeds": list(self.seeds),
            "config_fingerprint": self.config_fingerprint,
            "fusion_note": self.fusion_note,
            "aggregation": self.aggregation,
            "alignment_enabled": self.alignment_enabled,
            "kl_before": self.kl_before,
            "kl_after": self.kl_after,
            "selected_alphas": list(self.selected_alphas),
        }

    @classmethod
    def from_json_dict(cls, raw: Mapping[str, Any]) -> "ExperimentReport":
        return cls(
            mode=raw["mode"],
            source_label=raw["source_label"],
            columns=tuple(raw["columns"]),
            methods=tuple(raw["methods"]),
            metrics=tuple(raw["metrics"]),
            cells={
                m: {
                    c: {k: CellStat(v[0], v[1], int(v[2])) for k, v in col.items()}
                    for c, col in cols.items()
                }
                for m, cols in raw["cells"].items()
            },
            raw={
                m: {c: {k: tuple(v) for k, v in col.items()} for c, col in cols.items()}
                for m, cols in raw["raw"].items()
            },
            seeds=tuple(raw["seeds"]),
            config_fingerprint=raw["config_fingerprint"],
            fusion_note=raw["fusion_note"],
            aggregation=raw["aggregation"],
            alignment_enabled=raw["alignment_enabled"],
            kl_before=raw["kl_before"],
            kl_after=raw["kl_after"],
            selected_alphas=tuple(raw["selected_alphas"]),
        )


# --- splitting ---------------------------------------------------------------


def split_indices(
    n: int, grades: np.ndarray, fractions: SplitFractions, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stratified disjoint-exhaustive index split, deterministic per seed.

    Within each grade the quota is the largest-remainder apportionment of
    (train, validation, test); leftover units go to the split with the
    biggest fractional part, ties favoring train, then validation.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    fracs = (fractions.train, fractions.validation, fractions.test)
    for g in range(5):
        idx = np.nonzero(grades == g)[0]
        if idx.size == 0:
            continue
        rng.shuffle(idx)
        exact = [f * idx.size for f in fracs]
        quota = [int(np.floor(e)) for e in exact]
        leftover = idx.size - sum(quota)
        remainders = sorted(
            range(3), key=lambda i: (-(exact[i] - quota[i]), i)
        )
        for i in range(leftover):
            quota[remainders[i % 3]] += 1
        offset = 0
        for part, q in zip(parts, quota):
            part.extend(int(v) for v in idx[offset : offset + q])
            offset += q
    return tuple(np.asarray(sorted(p), dtype=np.int64) for p in parts)  # type: ignore[return-value]


def split_dataset(
    dataset: DomainDataset, fractions: SplitFractions, seed: int
) -> tuple[list[LabeledExample], list[LabeledExample], list[LabeledExample]]:
    """Stratified (train, validation, test) example lists."""
    grades = np.asarray(dataset.grades(), dtype=np.int64)
    tr, va, te = split_indices(len(dataset), grades, fractions, seed)
    ex = dataset.examples
    return ([ex[i] for i in tr], [ex[i] for i in va], [ex[i] for i in te])


# --- alignment --------------------------------------------------------------


def align_domains(
    datasets: Sequence[DomainDataset],
    reference: DomainId | str,
    schema: Sequence[str] | None = None,
) -> tuple[dict[DomainId, np.ndarray], float, float]:
    """Standardize every domain's features onto the reference domain's
    mean/variance (labels untouched; rows stay positionally aligned with
    each dataset's examples). Returns the transformed matrices plus the
    summed pairwise Gaussian KL before and after."""
    reference = DomainId(reference)
    if schema is None:
        schema = datasets[0].examples[0].features.schema()
    matrices = {d.domain: feature_matrix(d.examples, schema) for d in datasets}
    if reference not in matrices:
        raise InvalidConfig(f"reference domain {reference!r} not among datasets")
    stats = {name: DomainStats.from_matrix(m) for name, m in matrices.items()}
    kl_before = _pairwise_kl(stats)
    ref = stats[reference]
    ref_mean = np.asarray(ref.mean)
    ref_sd = np.sqrt(np.asarray(ref.variance))
    transformed: dict[DomainId, np.ndarray] = {}
    for name, m in matrices.items():
        st = stats[name]
        mu = np.asarray(st.mean)
        sd = np.sqrt(np.asarray(st.variance))
        transformed[name] = (m - mu) / sd * ref_sd + ref_mean
    after = {name: DomainStats.from_matrix(m) for name, m in transformed.items()}
    return transformed, kl_before, _pairwise_kl(after)


def _pairwise_kl(stats: Mapping[DomainId, DomainStats]) -> float:
    names = list(stats)
    total = 0.0
    for p in names:
        for q in names:
            if p != q:
                total += domain_kl(stats[p], stats[q])
    return total


# --- weight selection ----------------------------------------------------------


def select_weights(
    validation: Sequence[tuple[int, ProbabilityVector, ProbabilityVector]],
    grid: Sequence[tuple[float, float]] = DEFAULT_WEIGHT_GRID,
) -> FusionWeights:
    """Grid-search the blend maximizing validation accuracy; ties prefer
    the deep branch (smallest knowledge weight)."""
    if not validation:
        raise InvalidConfig("weight selection needs validation predictions")
    best: FusionWeights | None = None
    best_acc = -1.0
    for a_dl, a_kl in grid:
        w = FusionWeights(a_dl, a_kl)
        hits = sum(
            1 for y, p_dl, p_kd in validation if int(fuse("weighted", p_dl, p_kd, w).grade) == y
        )
        acc = hits / len(validation)
        if acc > best_acc:
            best_acc = acc
            best = w
    assert best is not None
    return best


# --- experiment drivers -----------------------------------------------------------


def _method_rows(cfg: ExperimentConfig, have_probs: bool) -> list[str]:
    rows = ["symbolic"]
    wants_neural = cfg.fusion.include_neural
    wants_fusion = bool(cfg.fusion.strategies)
    if (wants_neural or wants_fusion) and not have_probs:
        raise MissingProbabilityTable(
            "neural-only or fusion rows requested but a domain lacks a probability table"
        )
    if wants_neural:
        rows.append("neural")
    rows.extend(f"fusion-{s}" for s in cfg.fusion.strategies)
    return rows


def _neural_matrix(examples: Sequence[LabeledExample]) -> list[ProbabilityVector]:
    rows = []
    for ex in examples:
        if ex.neural_probs is None:
            raise MissingProbabilityTable(
                f"image {ex.image_id!r} has no neural probability row"
            )
        rows.append(ex.neural_probs)
    return rows


def _prob_rows(matrix: np.ndarray) -> list[ProbabilityVector]:
    return [ProbabilityVector(tuple(float(v) for v in row)) for row in matrix]


def _guard_leakage(
    train_keys: set[tuple[DomainId, str]], eval_sets: Mapping[DomainId, Sequence[LabeledExample]]
) -> None:
    for domain, examples in eval_sets.items():
        overlap = train_keys & {(ex.domain, ex.image_id) for ex in examples}
        if overlap:
            sample = sorted(overlap)[0]
            raise LeakageError(
                f"{len(overlap)} training image(s) leaked into evaluation of "
                f"{domain!r} (e.g. {sample[1]!r})"
            )


def _config_fingerprint(cfg: ExperimentConfig, manifest: Manifest) -> str:
    digests = {}
    for entry in manifest.domains:
        item = {"features": file_digest(entry.features)}
        if entry.probs is not None:
            item["probs"] = file_digest(entry.probs)
        if entry.detections is not None:
            item["detections"] = file_digest(entry.detections)
        digests[str(entry.name)] = item
    return content_digest(
        canonical_json({"config": cfg.as_dict(), "data": digests})
    )[:16]


def _evaluate_rows(
    methods: Sequence[str],
    y_true: list[int],
    kd_matrix: np.ndarray,
    dl_rows: list[ProbabilityVector] | None,
    weights: FusionWeights | None,
) -> dict[str, dict[str, float]]:
    """Per-method accuracy / macro F1 / AUC on one evaluation set."""
    kd_rows = _prob_rows(kd_matrix)
    out: dict[str, dict[str, float]] = {}
    for method in methods:
        if method == "symbolic":
            preds = [r.argmax() for r in kd_rows]
            prob_rows: Sequence[ProbabilityVector] = kd_rows
        elif method == "neural":
            assert dl_rows is not None
            preds = [r.argmax() for r in dl_rows]
            prob_rows = dl_rows
        else:
            strategy = method.removeprefix("fusion-")
            assert dl_rows is not None
            preds = [
                int(fuse(strategy, dl, kd, weights).grade)
                for dl, kd in zip(dl_rows, kd_rows)
            ]
            prob_rows = [
                fused_probability(strategy, dl, kd, weights)
                for dl, kd in zip(dl_rows, kd_rows)
            ]
        try:
            auc = auc_ovr_macro(y_true, prob_rows)
        except NoQualifyingClass:
            auc = float("nan")  # degenerate single-grade evaluation set
        out[method] = {
            "accuracy": accuracy(y_true, preds),
            "macro_f1": macro_f1(y_true, preds),
            "auc": auc,
        }
    return out


def _aggregate(
    methods: Sequence[str],
    columns: Sequence[str],
    metrics: Sequence[str],
    per_seed: list[dict[str, dict[str, dict[str, float]]]],
) -> tuple[dict, dict]:
    """Fold per-seed {method: {column: {metric: value}}} into CellStats,
    adding the cross-target 'average' column per seed first."""
    cells: dict[str, dict[str, dict[str, CellStat]]] = {}
    raw: dict[str, dict[str, dict[str, tuple[float, ...]]]] = {}
    for method in methods:
        cells[method] = {}
        raw[method] = {}
        for column in list(columns) + ["average"]:
            cells[method][column] = {}
            raw[method][column] = {}
            for metric in metrics:
                if column == "average":
                    values = [
                        float(np.mean([run[method][c][metric] for c in columns]))
                        for run in per_seed
                    ]
                else:
                    values = [run[method][column][metric] for run in per_seed]
                mean, std = seeded_summary(values)
                cells[method][column][metric] = CellStat(mean, std, len(values))
                raw[method][column][metric] = tuple(values)
    return cells, raw


def _load_all(manifest: Manifest) -> dict[DomainId, DomainDataset]:
    return {entry.name: load_domain_dataset(entry) for entry in manifest.domains}


def run_sdg(cfg: ExperimentConfig, manifest: Manifest) -> ExperimentReport:
    """Train on one domain, evaluate on every other domain's full data."""
    if cfg.mode != "sdg":
        raise InvalidConfig("run_sdg needs mode='sdg'")
    datasets = _load_all(manifest)
    source = DomainId(cfg.source)  # type: ignore[arg-type]
    if source not in datasets:
        raise InvalidConfig(f"source domain {cfg.source!r} not in manifest")
    if cfg.targets:
        targets = [DomainId(t) for t in cfg.targets]
        unknown = [t for t in targets if t not in datasets]
        if unknown:
            raise InvalidConfig(f"target domains {unknown} not in manifest")
    else:
        targets = [d for d in datasets if d != source]
    if not targets:
        raise InvalidConfig("sdg needs at least one target domain")

    have_probs = all(
        manifest.entry(d).probs is not None for d in [source] + targets
    )
    methods = _method_rows(cfg, have_probs)
    schema = resolve_schema(cfg.symbolic, list(datasets[source].examples))

    matrices = {d: feature_matrix(datasets[d].examples, schema) for d in datasets}
    kl_before = kl_after = None
    if cfg.alignment:
        ordered = [datasets[source]] + [datasets[t] for t in targets]
        matrices_aligned, kl_before, kl_after = align_domains(ordered, source, schema)
        matrices.update(matrices_aligned)

    id_index = {
        d: {ex.image_id: i for i, ex in enumerate(datasets[d].examples)} for d in datasets
    }
    per_seed: list[dict[str, dict[str, dict[str, float]]]] = []
    selected_alphas: list[float] = []
    for seed in cfg.seeds:
        train, valid, _test = split_dataset(datasets[source], cfg.split, seed)
        _guard_leakage(
            {(ex.domain, ex.image_id) for ex in train + valid},
            {t: datasets[t].examples for t in targets},
        )
        x_train = matrices[source][[id_index[source][ex.image_id] for ex in train]]
        x_valid = matrices[source][[id_index[source][ex.image_id] for ex in valid]]
        model = fit_model_arrays(
            x_train,
            grade_array(train),
            x_valid,
            grade_array(valid),
            schema,
            cfg.symbolic,
        )
        weights = cfg.fusion.fixed_weights()
        if "fusion-weighted" in methods and weights is None:
            kd_val = _prob_rows(model.predict_proba_matrix(x_valid))
            dl_val = _neural_matrix(valid)
            weights = select_weights(
                [(int(ex.grade), dl, kd) for ex, dl, kd in zip(valid, dl_val, kd_val)]
            )
            selected_alphas.append(weights.alpha_dl)
        run: dict[str, dict[str, dict[str, float]]] = {m: {} for m in methods}
        for t in targets:
            examples = datasets[t].examples
            dl_rows = _neural_matrix(examples) if len(methods) > 1 else None
            results = _evaluate_rows(
                methods,
                [int(ex.grade) for ex in examples],
                model.predict_proba_matrix(matrices[t]),
                dl_rows,
                weights,
            )
            for m in methods:
                run[m][t] = results[m]
        per_seed.append(run)

    columns = tuple(str(t) for t in targets)
    metrics = ("accuracy", "macro_f1", "auc")
    cells, raw = _aggregate(methods, columns, metrics, per_seed)
    return ExperimentReport(
        mode="sdg",
        source_label=str(source),
        columns=columns + ("average",),
        methods=tuple(methods),
        metrics=metrics,
        cells=cells,
        raw=raw,
        seeds=cfg.seeds,
        config_fingerprint=_config_fingerprint(cfg, manifest),
        fusion_note=FUSION_MAPPING_NOTE,
        alignment_enabled=cfg.alignment,
        kl_before=kl_before,
        kl_after=kl_after,
        selected_alphas=tuple(selected_alphas),
    )


def run_mdg(cfg: ExperimentConfig, manifest: Manifest) -> ExperimentReport:
    """Leave-one-domain-out: pool the other domains for training and
    evaluate on the held-out domain, once per domain."""
    if cfg.mode != "mdg":
        raise InvalidConfig("run_mdg needs mode='mdg'")
    datasets = _load_all(manifest)
    domains = [entry.name for entry in manifest.domains]
    if len(domains) < 2:
        raise InvalidConfig("mdg needs at least two domains")
    have_probs = all(entry.probs is not None for entry in manifest.domains)
    methods = _method_rows(cfg, have_probs)
    schema = resolve_schema(cfg.symbolic, list(datasets[domains[0]].examples))
    id_index = {
        d: {ex.image_id: i for i, ex in enumerate(datasets[d].examples)} for d in domains
    }

    per_seed: list[dict[str, dict[str, dict[str, float]]]] = []
    selected_alphas: list[float] = []
    kl_befores: list[float] = []
    kl_afters: list[float] = []
    for seed in cfg.seeds:
        run: dict[str, dict[str, dict[str, float]]] = {m: {} for m in methods}
        for held_out in domains:
            sources = [d for d in domains if d != held_out]
            matrices = {d: feature_matrix(datasets[d].examples, schema) for d in domains}
            if cfg.alignment:
                ordered = [datasets[d] for d in sources] + [datasets[held_out]]
                aligned, kb, ka = align_domains(ordered, sources[0], schema)
                matrices.update(aligned)
                kl_befores.append(kb)
                kl_afters.append(ka)
            train: list[LabeledExample] = []
            valid: list[LabeledExample] = []
            x_train_parts: list[np.ndarray] = []
            x_valid_parts: list[np.ndarray] = []
            for d in sources:
                tr, va, _te = split_dataset(datasets[d], cfg.split, seed)
                train.extend(tr)
                valid.extend(va)
                rows_tr = [id_index[d][ex.image_id] for ex in tr]
                rows_va = [id_index[d][ex.image_id] for ex in va]
                x_train_parts.append(matrices[d][rows_tr])
                x_valid_parts.append(matrices[d][rows_va])
            _guard_leakage(
                {(ex.domain, ex.image_id) for ex in train + valid},
                {held_out: datasets[held_out].examples},
            )
            model = fit_model_arrays(
                np.vstack(x_train_parts),
                grade_array(train),
                np.vstack(x_valid_parts),
                grade_array(valid),
                schema,
                cfg.symbolic,
            )
            weights = cfg.fusion.fixed_weights()
            if "fusion-weighted" in methods and weights is None:
                kd_val = _prob_rows(model.predict_proba_matrix(np.vstack(x_valid_parts)))
                dl_val = _neural_matrix(valid)
                weights = select_weights(
                    [(int(ex.grade), dl, kd) for ex, dl, kd in zip(valid, dl_val, kd_val)]
                )
                selected_alphas.append(weights.alpha_dl)
            examples = datasets[held_out].examples
            dl_rows = _neural_matrix(examples) if len(methods) > 1 else None
            results = _evaluate_rows(
                methods,
                [int(ex.grade) for ex in examples],
                model.predict_proba_matrix(matrices[held_out]),
                dl_rows,
                weights,
            )
            for m in methods:
                run[m][held_out] = results[m]
        per_seed.append(run)

    columns = tuple(str(d) for d in domains)
    metrics = ("accuracy", "macro_f1", "auc")
    cells, raw = _aggregate(methods, columns, metrics, per_seed)
    return ExperimentReport(
        mode="mdg",
        source_label="leave-one-domain-out",
        columns=columns + ("average",),
        methods=tuple(methods),
        metrics=metrics,
        cells=cells,
        raw=raw,
        seeds=cfg.seeds,
        config_fingerprint=_config_fingerprint(cfg, manifest),
        fusion_note=FUSION_MAPPING_NOTE,
        alignment_enabled=cfg.alignment,
        kl_before=float(np.mean(kl_befores)) if kl_befores else None,
        kl_after=float(np.mean(kl_afters)) if kl_afters else None,
        selected_alphas=tuple(selected_alphas),
    )


def run_experiment(cfg: ExperimentConfig, manifest: Manifest) -> ExperimentReport:
    return run_sdg(cfg, manifest) if cfg.mode == "sdg" else run_mdg(cfg, manifest)


# --- config file -------------------------------------------------------------


_CONFIG_SECTIONS = {"mode", "domains", "seeds", "split", "symbolic", "fusion", "rules", "alignment"}


def _build_section(section: str, cls, raw: Mapping[str, Any]):
    known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown keys in {section!r} section: {sorted(unknown)}")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
    except TypeError as exc:
        raise InvalidConfig(f"bad {section!r} section: {exc}") from exc


def load_experiment_config(path: str | Path) -> tuple[ExperimentConfig, Path]:
    """Parse experiment.json; returns the config and the manifest path
    (resolved relative to the config file)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"{path}: cannot read experiment config: {exc}") from exc
    unknown = set(raw) - _CONFIG_SECTIONS
    if unknown:
        raise InvalidConfig(f"{path}: unknown config sections: {sorted(unknown)}")
    domains = raw.get("domains", {})
    if "manifest" not in domains:
        raise InvalidConfig(f"{path}: the domains section must point at a manifest")
    manifest_path = (path.parent / domains["manifest"]).resolve()
    cfg = ExperimentConfig(
        mode=raw.get("mode", "sdg"),
        source=domains.get("source"),
        targets=tuple(domains["targets"]) if domains.get("targets") else None,
        seeds=tuple(int(s) for s in raw.get("seeds", (0, 1, 2))),
        split=_build_section("split", SplitFractions, raw.get("split", {})),
        symbolic=_build_section("symbolic", TrainConfig, raw.get("symbolic", {})),
        fusion=_build_section("fusion", FusionSpec, raw.get("fusion", {})),
        rules=_build_section("rules", RuleConfig, raw.get("rules", {})),
        alignment=bool(raw.get("alignment", False)),
    )
    return cfg, manifest_path
