"""Seeded multi-domain synthetic data with controllable shift.

Per domain: grades from a prior, Poisson lesion counts whose rates grow
with grade (scaled by a per-domain bias), detection boxes consistent
with those counts, vein morphology as a grade trend plus a
domain-specific Gaussian offset, and a simulated neural branch that hits
a configured accuracy. Everything derives from named RNG streams, so a
config and seed fully determine every output byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    BoundingBox,
    Detection,
    DomainDataset,
    DomainId,
    DRGrade,
    FeatureVector,
    LabeledExample,
    LesionType,
    ProbabilityVector,
)
from .errors import InvalidConfig
from .io import save_detections, save_feature_table, save_manifest, save_probability_table
from .rules import aggregate_detections

COUNTABLE_LESIONS = (
    LesionType.MICROANEURYSM,
    LesionType.HARD_EXUDATE,
    LesionType.HARD_HEMORRHAGE,
    LesionType.SOFT_HEMORRHAGE,
    LesionType.COTTON_WOOL_SPOT,
)

# Per-grade Poisson rates for the countable lesions, monotone in grade.
DEFAULT_COUNT_RATES: tuple[tuple[float, ...], ...] = (
    (0.2, 0.05, 0.05, 0.02, 0.01),
    (3.0, 0.3, 0.5, 0.2, 0.05),
    (6.0, 2.5, 2.5, 1.0, 0.6),
    (9.0, 4.0, 8.0, 4.0, 2.0),
    (12.0, 6.0, 12.0, 6.0, 3.5),
)

# Vein morphology: value = base + step * grade (+ domain offset + jitter).
VEIN_BASE = np.array([1.0, 8.0, 70.0])
VEIN_STEP = np.array([0.45, 1.1, 7.0])
VEIN_JITTER = np.array([0.05, 0.15, 1.2])
VEIN_CLIP_LO = np.array([0.0, 0.0, 0.0])
VEIN_CLIP_HI = np.array([np.inf, np.inf, 180.0])

DEFAULT_GRADE_PRIOR = (0.30, 0.20, 0.20, 0.15, 0.15)


@dataclass(frozen=True)
class DomainSpec:
    """Shift knobs for one synthetic domain."""

    name: str
    n_samples: int
    grade_prior: tuple[float, ...] = DEFAULT_GRADE_PRIOR
    count_bias: float = 1.0
    vein_noise_sigma: float = 0.1
    neural_in_domain_accuracy: float = 0.85
    neural_ood_accuracy: float = 0.60
    neural_temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise InvalidConfig("n_samples must be >= 1")
        if len(self.grade_prior) != 5 or any(p < 0 for p in self.grade_prior):
            raise InvalidConfig("grade_prior must be 5 nonnegative values")
        if abs(sum(self.grade_prior) - 1.0) > 1e-9:
            raise InvalidConfig("grade_prior must sum to 1")
        if self.count_bias < 0:
            raise InvalidConfig("count_bias must be >= 0")
        if self.vein_noise_sigma < 0:
            raise InvalidConfig("vein_noise_sigma must be >= 0")
        for name in ("neural_in_domain_accuracy", "neural_ood_accuracy"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise InvalidConfig(f"{name} must be in [0,1]")
        if self.neural_temperature <= 0:
            raise InvalidConfig("neural_temperature must be > 0")


@dataclass(frozen=True)
class SynthConfig:
    domains: tuple[DomainSpec, ...]
    count_rates: tuple[tuple[float, ...], ...] = DEFAULT_COUNT_RATES
    pdr_flag_prob: float = 0.9
    neural_source: str = ""
    with_vein: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.domains:
            raise InvalidConfig("need at least one domain")
        names = [DomainId(d.name) for d in self.domains]
        if len(set(names)) != len(names):
            raise InvalidConfig("domain names must be unique")
        rates = np.asarray(self.count_rates, dtype=np.float64)
        if rates.shape != (5, len(COUNTABLE_LESIONS)):
            raise InvalidConfig(f"count_rates must be 5x{len(COUNTABLE_LESIONS)}")
        if (rates < 0).any():
            raise InvalidConfig("count_rates must be >= 0")
        if not (0.0 <= self.pdr_flag_prob <= 1.0):
            raise InvalidConfig("pdr_flag_prob must be in [0,1]")
        if self.neural_source and DomainId(self.neural_source) not in names:
            raise InvalidConfig(f"neural_source {self.neural_source!r} is not a domain")

    def source_domain(self) -> DomainId:
        return DomainId(self.neural_source or self.domains[0].name)


@dataclass
class SynthOutput:
    datasets: dict[DomainId, DomainDataset] = field(default_factory=dict)
    detections: dict[DomainId, dict[str, list[Detection]]] = field(default_factory=dict)
    probability_tables: dict[DomainId, dict[str, ProbabilityVector]] = field(default_factory=dict)


def _stream(seed: int, *tokens: object) -> np.random.Generator:
    """Independent, platform-stable generator for a named stream."""
    key = "/".join(str(t) for t in tokens) + f"#{seed}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "big")))


def _random_box(rng: np.random.Generator) -> BoundingBox:
    w = round(float(rng.uniform(0.01, 0.06)), 6)
    h = round(float(rng.uniform(0.01, 0.06)), 6)
    x = round(float(rng.uniform(0.0, 1.0 - w)), 6)
    y = round(float(rng.uniform(0.0, 1.0 - h)), 6)
    return BoundingBox(x, y, w, h)


def _detections_for_sample(
    rng: np.random.Generator,
    counts: Sequence[int],
    subhyaloid: bool,
    neovasc: bool,
) -> list[Detection]:
    dets: list[Detection] = []
    for lesion, count in zip(COUNTABLE_LESIONS, counts):
        for _ in range(count):
            dets.append(Detection(lesion, _random_box(rng), round(float(rng.uniform(0.5, 1.0)), 6)))
    if subhyaloid:
        dets.append(
            Detection(LesionType.SUBHYALOID_HEMORRHAGE, _random_box(rng), round(float(rng.uniform(0.6, 1.0)), 6))
        )
    if neovasc:
        dets.append(
            Detection(LesionType.NEOVASCULARIZATION, _random_box(rng), round(float(rng.uniform(0.6, 1.0)), 6))
        )
    return dets


def simulate_neural_table(
    examples: Sequence[LabeledExample],
    accuracy: float,
    temperature: float,
    seed: int,
    stream: str = "neural",
) -> dict[str, ProbabilityVector]:
    """Accuracy-parameterized stand-in for a deep model's confidences.

    The true grade wins with probability ``accuracy``, otherwise a
    uniformly random wrong grade wins; ``temperature`` sets how peaked
    the softmax row is around the winner.
    """
    if not (0.0 <= accuracy <= 1.0):
        raise InvalidConfig("accuracy must be in [0,1]")
    if temperature <= 0:
        raise InvalidConfig("temperature must be > 0")
    rng = _stream(seed, stream)
    table: dict[str, ProbabilityVector] = {}
    for ex in examples:
        if rng.random() < accuracy:
            winner = int(ex.grade)
        else:
            others = [g for g in range(5) if g != int(ex.grade)]
            winner = int(others[rng.integers(0, 4)])
        logits = rng.uniform(0.0, 0.5, size=5)
        logits[winner] = 1.0 + rng.uniform(0.0, 0.25)
        z = logits / temperature
        z -= z.max()
        e = np.exp(z)
        probs = e / e.sum()
        table[ex.image_id] = ProbabilityVector(tuple(float(p) for p in probs))  # type: ignore[arg-type]
    return table


def gen_dataset(cfg: SynthConfig) -> SynthOutput:
    """Generate every domain's examples, detections, and neural tables."""
    rates = np.asarray(cfg.count_rates, dtype=np.float64)
    out = SynthOutput()
    source = cfg.source_domain()
    for spec in cfg.domains:
        domain = DomainId(spec.name)
        label_rng = _stream(cfg.seed, domain, "labels")
        box_rng = _stream(cfg.seed, domain, "boxes")
        vein_rng = _stream(cfg.seed, domain, "vein")
        offset_rng = _stream(cfg.seed, domain, "vein-offset")
        vein_offset = offset_rng.normal(0.0, 1.0, size=3) * VEIN_STEP * spec.vein_noise_sigma

        grades = label_rng.choice(5, size=spec.n_samples, p=np.asarray(spec.grade_prior))
        examples: list[LabeledExample] = []
        det_map: dict[str, list[Detection]] = {}
        for i in range(spec.n_samples):
            g = int(grades[i])
            image_id = f"{domain}-{i:05d}"
            counts = label_rng.poisson(rates[g] * spec.count_bias)
            subhyaloid = bool(g == 4 and label_rng.random() < cfg.pdr_flag_prob / 2)
            neovasc = bool(g == 4 and label_rng.random() < cfg.pdr_flag_prob)
            dets = _detections_for_sample(box_rng, counts.tolist(), subhyaloid, neovasc)
            det_map[image_id] = dets
            base = aggregate_detections(dets, min_score=0.0)
            kwargs = dict(
                microaneurysm_count=base.microaneurysm_count,
                exudate_count=base.exudate_count,
                hard_hemorrhage_count=base.hard_hemorrhage_count,
                soft_hemorrhage_count=base.soft_hemorrhage_count,
                cotton_wool_count=base.cotton_wool_count,
                subhyaloid_present=base.subhyaloid_present,
                neovascularization_present=base.neovascularization_present,
                hemorrhage_quadrants=base.hemorrhage_quadrants,
            )
            if cfg.with_vein:
                vein = VEIN_BASE + VEIN_STEP * g + vein_offset + vein_rng.normal(0.0, 1.0, 3) * VEIN_JITTER
                vein = np.clip(vein, VEIN_CLIP_LO, VEIN_CLIP_HI)
                vein = np.round(vein, 6)
                kwargs.update(
                    vein_tortuosity=float(vein[0]),
                    vein_caliber_mean=float(vein[1]),
                    vein_branch_angle_mean=float(vein[2]),
                )
            examples.append(
                LabeledExample(
                    image_id=image_id,
                    domain=domain,
                    grade=DRGrade(g),
                    features=FeatureVector(**kwargs),
                )
            )
        out.datasets[domain] = DomainDataset(domain, tuple(examples))
        out.detections[domain] = det_map
        acc = spec.neural_in_domain_accuracy if domain == source else spec.neural_ood_accuracy
        out.probability_tables[domain] = simulate_neural_table(
            examples, acc, spec.neural_temperature, cfg.seed, stream=f"{domain}/neural"
        )
    return out


def write_dataset(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Generate and write the data-io file layout; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    generated = gen_dataset(cfg)
    entries = []
    for domain in generated.datasets:
        features = f"{domain}_features.csv"
        probs = f"{domain}_probs.csv"
        dets = f"{domain}_detections.json"
        save_feature_table(out_dir / features, generated.datasets[domain].examples)
        save_probability_table(out_dir / probs, generated.probability_tables[domain])
        save_detections(out_dir / dets, generated.detections[domain])
        entries.append({"name": str(domain), "features": features, "probs": probs, "detections": dets})
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest_path, entries, seeds=(0, 1, 2))
    return manifest_path


def shift_profile(name: str, seed: int = 0, n_samples: int = 2000) -> SynthConfig:
    """Named presets: ``mild`` (benign shift), ``severe`` (strong count
    shift), ``vein_hostile`` (vein features informative in-domain but
    offset hard across domains, while lesion counts stay stable)."""
    common = dict(n_samples=n_samples, grade_prior=DEFAULT_GRADE_PRIOR)
    if name == "mild":
        domains = (
            DomainSpec("clinic_a", count_bias=1.0, vein_noise_sigma=0.1,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.62,
                       neural_temperature=0.25, **common),
            DomainSpec("clinic_b", count_bias=0.92, vein_noise_sigma=0.1,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.62,
                       neural_temperature=1.2, **common),
            DomainSpec("clinic_c", count_bias=1.1, vein_noise_sigma=0.1,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.62,
                       neural_temperature=1.2, **common),
        )
    elif name == "severe":
        domains = (
            DomainSpec("clinic_a", count_bias=1.0, vein_noise_sigma=1.0,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.45,
                       neural_temperature=0.25, **common),
            DomainSpec("clinic_b", count_bias=0.55, vein_noise_sigma=1.0,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.45,
                       neural_temperature=1.2, **common),
            DomainSpec("clinic_c", count_bias=1.7, vein_noise_sigma=1.0,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.45,
                       neural_temperature=1.2, **common),
        )
    elif name == "vein_hostile":
        domains = (
            DomainSpec("clinic_a", count_bias=1.0, vein_noise_sigma=3.0,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.55,
                       neural_temperature=0.25, **common),
            DomainSpec("clinic_b", count_bias=0.95, vein_noise_sigma=3.0,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.55,
                       neural_temperature=1.2, **common),
            DomainSpec("clinic_c", count_bias=1.05, vein_noise_sigma=3.0,
                       neural_in_domain_accuracy=0.85, neural_ood_accuracy=0.55,
                       neural_temperature=1.2, **common),
        )
    else:
        raise InvalidConfig(f"unknown shift profile {name!r}")
    return SynthConfig(domains=domains, neural_source="clinic_a", seed=seed)
