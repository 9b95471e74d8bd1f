"""Tests for manifest parsing, serialization and augmentation."""

from pathlib import Path

import pytest

from mir3d.errors import DataValidationError, ManifestParseError
from mir3d.services.manifest_service import (
    augment_train_split,
    dump_manifest,
    load_manifest,
    load_volume_embeddings,
    parse_manifest,
    with_ground_truth,
)
from tests.conftest import write_dataset

MANIFEST = """\
dataset_name: demo
embedding_dim: 4
volumes:
  - volume_id: v1
    organ_tag: liver
    split: train
    slice_embeddings_path: emb/v1.emb
    lesion_mask_path: masks/v1.yaml
    lesion_flag: true
    lesion_group: G1
  - volume_id: v2
    organ_tag: lung
    split: test
    slice_embeddings_path: emb/v2.emb
    lesion_flag: false
    lesion_group: G0
"""


class TestParseManifest:
    """Tests for parse_manifest and dump_manifest."""

    def test_parse(self):
        manifest = parse_manifest(MANIFEST)
        assert manifest.dataset_name == "demo"
        assert [v.volume_id for v in manifest.volumes] == ["v1", "v2"]
        assert manifest.volumes[0].lesion_mask_path == Path("masks/v1.yaml")
        assert manifest.volumes[1].caption_embedding_path is None

    def test_dump_then_parse_is_identity(self):
        manifest = parse_manifest(MANIFEST)
        text = dump_manifest(manifest)
        assert parse_manifest(text) == manifest
        assert "caption_embedding_path" not in text

    def test_yaml_error_carries_line(self):
        with pytest.raises(ManifestParseError) as info:
            parse_manifest("dataset_name: demo\nembedding_dim: [4\nvolumes: []\n")
        assert info.value.line is not None

    def test_unknown_field_carries_field(self):
        text = MANIFEST.replace("    lesion_group: G0\n", "    lesion_group: G0\n    colour: red\n")
        with pytest.raises(ManifestParseError) as info:
            parse_manifest(text)
        assert info.value.field is not None
        assert "colour" in info.value.field

    def test_not_a_mapping(self):
        with pytest.raises(ManifestParseError):
            parse_manifest("- a\n- b\n")

    def test_duplicate_id_is_validation_error(self):
        text = MANIFEST.replace("volume_id: v2", "volume_id: v1")
        with pytest.raises(DataValidationError, match="duplicate volume_id 'v1'"):
            parse_manifest(text)

    def test_missing_group_label_is_validation_error(self):
        text = MANIFEST.replace("    lesion_group: G0\n", "")
        with pytest.raises(DataValidationError, match="lesion_group"):
            parse_manifest(text)

    def test_inconsistent_labels(self):
        text = MANIFEST.replace("lesion_flag: true", "lesion_flag: false")
        with pytest.raises(DataValidationError, match="contradicts"):
            parse_manifest(text)


class TestManifestFiles:
    """Tests for loading manifests and the embeddings they reference."""

    def test_paths_resolve_against_manifest_dir(self, tiny_dataset, temp_dir):
        assert tiny_dataset.base_dir == temp_dir
        matrix = load_volume_embeddings(tiny_dataset, tiny_dataset.get("a1"))
        assert matrix.volume_id == "a1"
        assert len(matrix) == 2

    def test_dimension_mismatch(self, temp_dir):
        manifest = write_dataset(temp_dir, {"x": ("train", "G0", [[1.0, 2.0, 3.0]])}, dim=2)
        with pytest.raises(DataValidationError, match="'x'"):
            load_volume_embeddings(manifest, manifest.get("x"))

    def test_with_ground_truth(self, tiny_dataset):
        updated = with_ground_truth(tiny_dataset, {"a1": (True, "G3")})
        assert updated.get("a1").lesion_group == "G3"
        assert updated.get("a1").lesion_flag is True
        assert updated.get("a2") == tiny_dataset.get("a2")
        assert updated.base_dir == tiny_dataset.base_dir

    def test_load_manifest_round_trip(self, tiny_dataset, temp_dir):
        reloaded = load_manifest(temp_dir / "manifest.yaml")
        assert reloaded == tiny_dataset


class TestAugmentTrainSplit:
    """Tests for cross-dataset train augmentation."""

    @pytest.fixture
    def donor(self, temp_dir):
        root = temp_dir / "donor"
        volumes = {
            "d_healthy1": ("test", "G0", [[1.0, 1.0]]),
            "d_healthy2": ("train", "G0", [[1.0, 2.0]]),
            "d_small": ("train", "G1", [[2.0, 2.0]]),
            "d_large": ("train", "G3", [[3.0, 3.0]]),
        }
        return write_dataset(root, volumes, dim=2, name="donor")

    def test_only_small_or_healthy_donors(self, tiny_dataset, donor):
        augmented = augment_train_split(tiny_dataset, [donor], count=3, seed=0)
        added = [v for v in augmented.volumes if v.volume_id.startswith("d_")]
        assert {v.volume_id for v in added} == {"d_healthy1", "d_healthy2", "d_small"}
        assert all(v.split == "train" for v in added)
        assert all(v.slice_embeddings_path.is_absolute() for v in added)
        assert load_volume_embeddings(augmented, augmented.get("d_small")).volume_id == "d_small"

    def test_healthy_donors_only(self, tiny_dataset, donor):
        augmented = augment_train_split(tiny_dataset, [donor], count=2, seed=0, include_small_lesions=False)
        added = {v.volume_id for v in augmented.volumes if v.volume_id.startswith("d_")}
        assert added == {"d_healthy1", "d_healthy2"}
        with pytest.raises(DataValidationError, match="only 2 eligible"):
            augment_train_split(tiny_dataset, [donor], count=3, seed=0, include_small_lesions=False)

    def test_seeded(self, tiny_dataset, donor):
        first = augment_train_split(tiny_dataset, [donor], count=2, seed=7)
        second = augment_train_split(tiny_dataset, [donor], count=2, seed=7)
        assert first == second

    def test_too_many_requested(self, tiny_dataset, donor):
        with pytest.raises(DataValidationError, match="only 3 eligible"):
            augment_train_split(tiny_dataset, [donor], count=4, seed=0)

    def test_id_collision(self, tiny_dataset, temp_dir):
        clash = write_dataset(temp_dir / "clash", {"a1": ("train", "G0", [[0.0, 0.0]])}, dim=2, name="clash")
        with pytest.raises(DataValidationError, match="collides"):
            augment_train_split(tiny_dataset, [clash], count=1, seed=0)
