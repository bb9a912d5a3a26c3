import dataclasses
import json

import numpy as np
import pytest

from kgdg.core import (
    DomainDataset,
    DomainId,
    DRGrade,
    FeatureVector,
    LabeledExample,
    validate_probability,
)
from kgdg.errors import InvalidConfig, LeakageError, MissingProbabilityTable
from kgdg.harness import (
    ExperimentConfig,
    FusionSpec,
    SplitFractions,
    align_domains,
    load_experiment_config,
    run_mdg,
    run_sdg,
    select_weights,
    split_dataset,
    _guard_leakage,
)
from kgdg.io import load_manifest
from kgdg.learn import TrainConfig
from kgdg.metrics import seeded_summary
from kgdg.synth import shift_profile, write_dataset


def balanced_dataset(n_per_grade=20, domain="d"):
    examples = []
    i = 0
    for g in range(5):
        for _ in range(n_per_grade):
            examples.append(
                LabeledExample(
                    image_id=f"{domain}-{i}",
                    domain=DomainId(domain),
                    grade=DRGrade(g),
                    features=FeatureVector(microaneurysm_count=i % 7),
                )
            )
            i += 1
    return DomainDataset(DomainId(domain), tuple(examples))


class TestSplitDataset:
    def test_balanced_100_gives_12_4_4_per_grade(self):
        ds = balanced_dataset(20)
        train, valid, test = split_dataset(ds, SplitFractions(), seed=0)
        assert (len(train), len(valid), len(test)) == (60, 20, 20)
        for part, expected in ((train, 12), (valid, 4), (test, 4)):
            counts = np.bincount([int(e.grade) for e in part], minlength=5)
            assert list(counts) == [expected] * 5

    def test_same_seed_identical(self):
        ds = balanced_dataset(13)
        a = split_dataset(ds, SplitFractions(), seed=3)
        b = split_dataset(ds, SplitFractions(), seed=3)
        assert a == b

    def test_different_seed_differs(self):
        ds = balanced_dataset(13)
        a = split_dataset(ds, SplitFractions(), seed=3)
        b = split_dataset(ds, SplitFractions(), seed=4)
        assert a != b

    def test_disjoint_and_exhaustive(self):
        ds = balanced_dataset(7)
        train, valid, test = split_dataset(ds, SplitFractions(), seed=1)
        ids = [e.image_id for e in train + valid + test]
        assert len(ids) == len(set(ids)) == len(ds)

    def test_singleton_grade_goes_to_train(self):
        examples = list(balanced_dataset(3).examples)
        examples.append(
            LabeledExample("lone", DomainId("d"), DRGrade.PDR, FeatureVector())
        )
        # grade 4 now has 4 examples; craft a dataset where one grade has exactly 1
        lone = DomainDataset(
            DomainId("d"),
            tuple(e for e in examples if int(e.grade) < 2)
            + (LabeledExample("solo", DomainId("d"), DRGrade.PDR, FeatureVector()),),
        )
        train, valid, test = split_dataset(lone, SplitFractions(), seed=0)
        assert any(e.image_id == "solo" for e in train)
        assert not any(e.image_id == "solo" for e in valid + test)

    def test_split_fractions_validated(self):
        with pytest.raises(InvalidConfig):
            SplitFractions(0.5, 0.2, 0.2)


class TestAlignDomains:
    def _dataset(self, name, shift):
        rng = np.random.default_rng(0)
        examples = []
        for i in range(120):
            g = int(rng.integers(0, 5))
            examples.append(
                LabeledExample(
                    image_id=f"{name}-{i}",
                    domain=DomainId(name),
                    grade=DRGrade(g),
                    features=FeatureVector(
                        microaneurysm_count=int(rng.poisson(2 + g)) + shift,
                        exudate_count=int(rng.poisson(1 + g)) + shift,
                        hemorrhage_quadrants=min(4, g),
                    ),
                )
            )
        return DomainDataset(DomainId(name), tuple(examples))

    def test_single_domain_zero_kl(self):
        ds = self._dataset("a", 0)
        _, before, after = align_domains([ds], "a")
        assert before == 0.0 and after == 0.0

    def test_pure_mean_shift_cancelled(self):
        # same draws, one domain offset by a constant
        a = self._dataset("a", 0)
        b_examples = tuple(
            dataclasses.replace(
                ex,
                image_id=f"b-{i}",
                domain=DomainId("b"),
                features=dataclasses.replace(
                    ex.features,
                    microaneurysm_count=ex.features.microaneurysm_count + 3,
                    exudate_count=ex.features.exudate_count + 3,
                ),
            )
            for i, ex in enumerate(a.examples)
        )
        b = DomainDataset(DomainId("b"), b_examples)
        transformed, before, after = align_domains([a, b], "a")
        assert before > 0.5
        assert after < 1e-9
        assert np.allclose(transformed[DomainId("a")], transformed[DomainId("b")])

    def test_labels_untouched(self):
        a = self._dataset("a", 0)
        b = self._dataset("b", 2)
        grades_before = (a.grades(), b.grades())
        align_domains([a, b], "a")
        assert (a.grades(), b.grades()) == grades_before

    def test_unknown_reference(self):
        with pytest.raises(InvalidConfig):
            align_domains([self._dataset("a", 0)], "zzz")


class TestSelectWeights:
    def test_prefers_deep_on_ties(self):
        # deep and knowledge both always right -> every alpha ties -> largest alpha_dl wins
        rows = []
        for g in (0, 1, 2):
            p = validate_probability([0.8 if i == g else 0.05 for i in range(5)])
            rows.append((g, p, p))
        w = select_weights(rows)
        assert w.alpha_dl == pytest.approx(0.9)
        assert w.alpha_kl == pytest.approx(0.1)

    def test_prefers_accurate_branch(self):
        rows = []
        rng = np.random.default_rng(0)
        for _ in range(60):
            g = int(rng.integers(0, 5))
            good = [0.7 if i == g else 0.075 for i in range(5)]
            wrong_grade = (g + 1) % 5
            bad = [0.7 if i == wrong_grade else 0.075 for i in range(5)]
            rows.append((g, validate_probability(bad), validate_probability(good)))
        w = select_weights(rows)
        assert w.alpha_kl > w.alpha_dl

    def test_empty_rejected(self):
        with pytest.raises(InvalidConfig):
            select_weights([])


class TestGuardLeakage:
    def test_fires_on_overlap(self):
        ds = balanced_dataset(3, domain="x")
        keys = {(ex.domain, ex.image_id) for ex in ds.examples[:5]}
        with pytest.raises(LeakageError):
            _guard_leakage(keys, {DomainId("x"): ds.examples})

    def test_silent_when_disjoint(self):
        ds = balanced_dataset(3, domain="x")
        other = balanced_dataset(3, domain="y")
        keys = {(ex.domain, ex.image_id) for ex in ds.examples}
        _guard_leakage(keys, {DomainId("y"): other.examples})


@pytest.fixture(scope="module")
def small_manifest(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("synthdata")
    cfg = shift_profile("mild", seed=0, n_samples=150)
    return load_manifest(write_dataset(cfg, tmp))


FAST_SYMBOLIC = dict(n_trees=25, min_leaf=2, early_stop_patience=5)


class TestRunSdg:
    def test_report_shape_and_reproducibility(self, small_manifest):
        cfg = ExperimentConfig(
            mode="sdg", source="clinic_a", seeds=(0, 1),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
        )
        rep1 = run_sdg(cfg, small_manifest)
        rep2 = run_sdg(cfg, small_manifest)
        assert rep1.to_json_dict() == rep2.to_json_dict()
        assert rep1.columns == ("clinic_b", "clinic_c", "average")
        assert set(rep1.methods) >= {"symbolic", "neural"}
        for m in rep1.methods:
            for c in rep1.columns:
                stat = rep1.cell(m, c)
                assert 0.0 <= stat.mean <= 1.0
                assert stat.n_seeds == 2

    def test_mean_std_equal_seeded_summary_of_raw(self, small_manifest):
        cfg = ExperimentConfig(
            mode="sdg", source="clinic_a", seeds=(0, 1, 2),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
            fusion=FusionSpec(strategies=("max",)),
        )
        rep = run_sdg(cfg, small_manifest)
        for m in rep.methods:
            for c in rep.columns:
                for metric in rep.metrics:
                    mean, std = seeded_summary(rep.raw[m][c][metric])
                    stat = rep.cells[m][c][metric]
                    assert stat.mean == pytest.approx(mean)
                    assert stat.std == pytest.approx(std)

    def test_symbolic_only_without_probs(self, tmp_path):
        cfg_data = shift_profile("mild", seed=1, n_samples=120)
        manifest_path = write_dataset(cfg_data, tmp_path)
        raw = json.loads(manifest_path.read_text())
        for d in raw["domains"]:
            d["probs"] = None
        manifest_path.write_text(json.dumps(raw))
        manifest = load_manifest(manifest_path)
        cfg = ExperimentConfig(
            mode="sdg", source="clinic_a", seeds=(0,),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
            fusion=FusionSpec(strategies=(), include_neural=False),
        )
        rep = run_sdg(cfg, manifest)
        assert rep.methods == ("symbolic",)

    def test_missing_probability_table_raises(self, tmp_path):
        cfg_data = shift_profile("mild", seed=1, n_samples=120)
        manifest_path = write_dataset(cfg_data, tmp_path)
        raw = json.loads(manifest_path.read_text())
        raw["domains"][1]["probs"] = None
        manifest_path.write_text(json.dumps(raw))
        manifest = load_manifest(manifest_path)
        cfg = ExperimentConfig(
            mode="sdg", source="clinic_a", seeds=(0,),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
        )
        with pytest.raises(MissingProbabilityTable):
            run_sdg(cfg, manifest)

    def test_explicit_targets_subset(self, small_manifest):
        cfg = ExperimentConfig(
            mode="sdg", source="clinic_a", targets=("clinic_c",), seeds=(0,),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
            fusion=FusionSpec(strategies=(), include_neural=False),
        )
        rep = run_sdg(cfg, small_manifest)
        assert rep.columns == ("clinic_c", "average")

    def test_alignment_records_kl(self, small_manifest):
        cfg = ExperimentConfig(
            mode="sdg", source="clinic_a", seeds=(0,),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
            fusion=FusionSpec(strategies=(), include_neural=False),
            alignment=True,
        )
        rep = run_sdg(cfg, small_manifest)
        assert rep.kl_before is not None and rep.kl_after is not None
        assert rep.kl_after <= rep.kl_before


class TestRunMdg:
    def test_leave_one_out_fold_per_domain(self, small_manifest):
        cfg = ExperimentConfig(
            mode="mdg", seeds=(0,),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
            fusion=FusionSpec(strategies=("max",)),
        )
        rep = run_mdg(cfg, small_manifest)
        assert rep.columns == ("clinic_a", "clinic_b", "clinic_c", "average")
        assert rep.mode == "mdg"

    def test_mode_mismatch_rejected(self, small_manifest):
        cfg = ExperimentConfig(mode="sdg", source="clinic_a")
        with pytest.raises(InvalidConfig):
            run_mdg(cfg, small_manifest)

    def test_alignment_path_trains_and_evaluates(self, tmp_path):
        manifest = load_manifest(
            write_dataset(shift_profile("severe", seed=2, n_samples=150), tmp_path)
        )
        cfg = ExperimentConfig(
            mode="mdg", seeds=(0,),
            symbolic=TrainConfig(**FAST_SYMBOLIC),
            fusion=FusionSpec(strategies=("max",)),
            alignment=True,
        )
        rep = run_mdg(cfg, manifest)
        assert rep.alignment_enabled
        assert rep.kl_after < rep.kl_before
        for m in rep.methods:
            for c in rep.columns:
                assert 0.0 <= rep.cell(m, c).mean <= 1.0


class TestExperimentConfigFile:
    def test_load_round_trip(self, tmp_path):
        manifest_path = write_dataset(shift_profile("mild", seed=0, n_samples=60), tmp_path)
        config_path = tmp_path / "experiment.json"
        config_path.write_text(json.dumps({
            "mode": "sdg",
            "domains": {"manifest": manifest_path.name, "source": "clinic_a"},
            "seeds": [0, 1],
            "split": {"train": 0.6, "validation": 0.2, "test": 0.2},
            "symbolic": {"model_kind": "gbm", "n_trees": 10},
            "fusion": {"strategies": ["max"], "include_neural": True},
            "rules": {"cws_severe_threshold": 5},
            "alignment": False,
        }))
        cfg, mpath = load_experiment_config(config_path)
        assert cfg.mode == "sdg"
        assert cfg.seeds == (0, 1)
        assert cfg.symbolic.n_trees == 10
        assert mpath == manifest_path.resolve()

    def test_unknown_section_rejected(self, tmp_path):
        config_path = tmp_path / "experiment.json"
        config_path.write_text(json.dumps({"domains": {"manifest": "m.json"}, "extra": 1}))
        with pytest.raises(InvalidConfig):
            load_experiment_config(config_path)

    def test_unknown_symbolic_key_rejected(self, tmp_path):
        config_path = tmp_path / "experiment.json"
        config_path.write_text(json.dumps({
            "domains": {"manifest": "m.json"},
            "symbolic": {"depth": 3},
        }))
        with pytest.raises(InvalidConfig):
            load_experiment_config(config_path)
