import json

import numpy as np
import pytest

from kgdg.core import (
    DomainId,
    DRGrade,
    FeatureVector,
    LabeledExample,
    validate_probability,
)
from kgdg.errors import (
    BoxOutOfBounds,
    CorruptArtifact,
    DuplicateImageId,
    MissingColumn,
    NonNumericCell,
    SchemaMismatch,
    SumOutOfTolerance,
    UnknownImageId,
    UnknownLesionKind,
)
from kgdg.io import (
    LESIONS_ONLY_HEADER,
    LESIONS_VEIN_HEADER,
    join_probabilities,
    load_detections,
    load_feature_table,
    load_manifest,
    load_model,
    load_probability_table,
    save_feature_table,
    save_model,
)
from kgdg.learn import TrainConfig, fit_gbm, model_from_artifact

LESIONS_HEADER_LINE = ",".join(LESIONS_ONLY_HEADER)
VEIN_HEADER_LINE = ",".join(LESIONS_VEIN_HEADER)


class TestFeatureTable:
    def test_direct_field_mapping(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text(LESIONS_HEADER_LINE + "\nimg1,aptos,2,3,5,1,0,2,0,0,3\n")
        rows = load_feature_table(path)
        assert len(rows) == 1
        ex = rows[0]
        assert ex.image_id == "img1"
        assert ex.domain == DomainId("aptos")
        assert ex.grade == DRGrade.MODERATE
        assert ex.features.microaneurysm_count == 3
        assert ex.features.exudate_count == 5
        assert ex.features.cotton_wool_count == 2
        assert ex.features.hemorrhage_quadrants == 3
        assert not ex.features.has_vein

    def test_duplicate_image_id(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text(
            LESIONS_HEADER_LINE + "\nimg1,aptos,2,3,5,1,0,2,0,0,3\nimg1,aptos,1,1,0,0,0,0,0,0,0\n"
        )
        with pytest.raises(DuplicateImageId):
            load_feature_table(path)

    def test_vein_range_violation(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text(VEIN_HEADER_LINE + "\nimg1,aptos,2,3,5,1,0,2,0,0,3,1.5,9.0,190\n")
        with pytest.raises(NonNumericCell):
            load_feature_table(path)

    def test_unknown_header_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("image_id,domain,grade,foo\nimg1,aptos,2,1\n")
        with pytest.raises(MissingColumn):
            load_feature_table(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text(LESIONS_HEADER_LINE + "\nimg1,aptos,2,three,5,1,0,2,0,0,3\n")
        with pytest.raises(NonNumericCell):
            load_feature_table(path)

    def test_row_order_insensitive(self, tmp_path):
        rows = [
            "img1,aptos,2,3,5,1,0,2,0,0,3",
            "img2,aptos,0,0,0,0,0,0,0,0,0",
            "img3,aptos,4,9,2,8,3,1,1,1,4",
        ]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text(LESIONS_HEADER_LINE + "\n" + "\n".join(rows) + "\n")
        b.write_text(LESIONS_HEADER_LINE + "\n" + "\n".join(reversed(rows)) + "\n")
        assert set(load_feature_table(a)) == set(load_feature_table(b))

    def test_round_trip_without_vein(self, tmp_path):
        examples = [
            LabeledExample(
                image_id=f"img{i}",
                domain=DomainId("synth"),
                grade=DRGrade(i % 5),
                features=FeatureVector(microaneurysm_count=i, hemorrhage_quadrants=i % 5),
            )
            for i in range(6)
        ]
        path = tmp_path / "f.csv"
        save_feature_table(path, examples)
        assert load_feature_table(path) == examples

    def test_round_trip_with_vein(self, tmp_path):
        examples = [
            LabeledExample(
                image_id="v1",
                domain=DomainId("synth"),
                grade=DRGrade.MILD,
                features=FeatureVector(
                    microaneurysm_count=2,
                    vein_tortuosity=1.25,
                    vein_caliber_mean=8.5,
                    vein_branch_angle_mean=77.125,
                ),
            )
        ]
        path = tmp_path / "f.csv"
        save_feature_table(path, examples)
        assert load_feature_table(path) == examples


class TestProbabilityTable:
    def test_load_and_validate(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("image_id,p0,p1,p2,p3,p4\nimg1,0.1,0.2,0.3,0.2,0.2\n")
        table = load_probability_table(path)
        assert table["img1"].probs == (0.1, 0.2, 0.3, 0.2, 0.2)

    def test_sum_out_of_tolerance(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("image_id,p0,p1,p2,p3,p4\nimg1,0.5,0.5,0.5,0,0\n")
        with pytest.raises(SumOutOfTolerance):
            load_probability_table(path)

    def test_join_missing_image(self, tmp_path):
        examples = [
            LabeledExample("img7", DomainId("d"), DRGrade.NO_DR, FeatureVector()),
        ]
        with pytest.raises(UnknownImageId):
            join_probabilities(examples, {"img1": validate_probability([1, 0, 0, 0, 0])})

    def test_join_attaches_probs(self):
        examples = [LabeledExample("a", DomainId("d"), DRGrade.NO_DR, FeatureVector())]
        joined = join_probabilities(examples, {"a": validate_probability([0, 0, 1, 0, 0])})
        assert joined[0].neural_probs.argmax() == 2


class TestDetections:
    def test_load_valid(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(
            json.dumps(
                [
                    {"image_id": "i1", "lesion": "microaneurysm", "x": 0.1, "y": 0.1, "w": 0.05, "h": 0.05, "score": 0.8},
                    {"image_id": "i1", "lesion": "hard_exudate", "x": 0.4, "y": 0.4, "w": 0.1, "h": 0.1, "score": 0.6},
                ]
            )
        )
        dets = load_detections(path)
        assert len(dets["i1"]) == 2

    def test_unknown_lesion(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps([{"image_id": "i1", "lesion": "drusen", "x": 0.1, "y": 0.1, "w": 0.1, "h": 0.1, "score": 0.5}]))
        with pytest.raises(UnknownLesionKind):
            load_detections(path)

    def test_box_out_of_bounds(self, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps([{"image_id": "i1", "lesion": "microaneurysm", "x": 0.95, "y": 0.1, "w": 0.2, "h": 0.1, "score": 0.5}]))
        with pytest.raises(BoxOutOfBounds):
            load_detections(path)


class TestManifest:
    def test_load_resolves_paths(self, tmp_path):
        (tmp_path / "a.csv").write_text(LESIONS_HEADER_LINE + "\n")
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"domains": [{"name": "A", "features": "a.csv"}], "seeds": [0, 1]}))
        m = load_manifest(manifest)
        assert m.domains[0].name == "a"
        assert m.domains[0].features == (tmp_path / "a.csv").resolve()
        assert m.seeds == (0, 1)

    def test_duplicate_domains_rejected(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"domains": [
            {"name": "a", "features": "a.csv"},
            {"name": "A", "features": "b.csv"},
        ]}))
        from kgdg.errors import InvalidConfig

        with pytest.raises(InvalidConfig):
            load_manifest(manifest)


def _toy_examples(n=40, seed=0, domain="d"):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        g = int(rng.integers(0, 5))
        out.append(
            LabeledExample(
                image_id=f"{domain}{i}",
                domain=DomainId(domain),
                grade=DRGrade(g),
                features=FeatureVector(
                    microaneurysm_count=int(rng.poisson(1 + 2 * g)),
                    exudate_count=int(rng.poisson(g)),
                    hard_hemorrhage_count=int(rng.poisson(2 * g)),
                    hemorrhage_quadrants=int(min(4, rng.integers(0, g + 1))),
                ),
            )
        )
    return out


class TestModelArtifact:
    def test_round_trip_predictions_identical(self, tmp_path):
        examples = _toy_examples(60)
        model = fit_gbm(examples[:50], examples[50:], TrainConfig(n_trees=20, min_leaf=2, seed=1))
        path = tmp_path / "m.kgdg"
        save_model(model.to_artifact(), path)
        loaded = model_from_artifact(load_model(path))
        rng = np.random.default_rng(0)
        probe = rng.uniform(0, 10, size=(1000, 8))
        assert np.array_equal(model.predict_proba_matrix(probe), loaded.predict_proba_matrix(probe))

    def test_save_is_byte_stable(self, tmp_path):
        examples = _toy_examples(40)
        model = fit_gbm(examples[:30], examples[30:], TrainConfig(n_trees=5, min_leaf=2, seed=1))
        p1, p2 = tmp_path / "a.kgdg", tmp_path / "b.kgdg"
        save_model(model.to_artifact(), p1)
        save_model(model_from_artifact(load_model(p1)).to_artifact(), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_edited_schema_raises_schema_mismatch(self, tmp_path):
        examples = _toy_examples(40)
        model = fit_gbm(examples[:30], examples[30:], TrainConfig(n_trees=3, min_leaf=2, seed=1))
        path = tmp_path / "m.kgdg"
        save_model(model.to_artifact(), path)
        text = path.read_text()
        tampered = text.replace("microaneurysm_count", "microaneurysm_edited", 1)
        assert tampered != text
        path.write_text(tampered)
        with pytest.raises(SchemaMismatch):
            load_model(path)

    def test_truncated_file_raises_corrupt(self, tmp_path):
        examples = _toy_examples(40)
        model = fit_gbm(examples[:30], examples[30:], TrainConfig(n_trees=3, min_leaf=2, seed=1))
        path = tmp_path / "m.kgdg"
        save_model(model.to_artifact(), path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptArtifact):
            load_model(path)

    def test_edited_params_raises_corrupt(self, tmp_path):
        examples = _toy_examples(40)
        model = fit_gbm(examples[:30], examples[30:], TrainConfig(n_trees=3, min_leaf=2, seed=1))
        path = tmp_path / "m.kgdg"
        save_model(model.to_artifact(), path)
        path.write_text(path.read_text().replace('"learning_rate":0.1', '"learning_rate":0.9'))
        with pytest.raises(CorruptArtifact):
            load_model(path)

    def test_missing_magic(self, tmp_path):
        path = tmp_path / "m.kgdg"
        path.write_text("not a model")
        with pytest.raises(CorruptArtifact):
            load_model(path)
