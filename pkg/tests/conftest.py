"""Pytest fixtures for tests."""

import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from mir3d.config import settings
from mir3d.models import DatasetManifest, EmbeddingMatrix, SynthConfig, VolumeEntry
from mir3d.services.embedding_service import write_embeddings
from mir3d.services.manifest_service import load_manifest, save_manifest
from mir3d.services.synth_service import MANIFEST_NAME, synth_generate


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    tmp = tempfile.mkdtemp()
    yield Path(tmp)
    shutil.rmtree(tmp)


@pytest.fixture(autouse=True)
def single_threaded(monkeypatch):
    """Keep the shared settings deterministic and sequential per test."""
    monkeypatch.setattr(settings, "threads", 1)
    monkeypatch.setattr(settings, "n_per_slice", 20)
    monkeypatch.setattr(settings, "caption_n", 20)
    monkeypatch.setattr(settings, "workdir", Path("."))


def make_matrix(volume_id: str, vectors, start: int = 0) -> EmbeddingMatrix:
    vectors = np.asarray(vectors, dtype=np.float32)
    return EmbeddingMatrix(
        volume_id=volume_id,
        slice_indices=np.arange(start, start + len(vectors), dtype=np.uint32),
        vectors=vectors,
    )


def write_dataset(
    root: Path,
    volumes: dict[str, tuple[str, str, list[list[float]]]],
    dim: int,
    name: str = "tiny",
) -> DatasetManifest:
    """Write EMB1 files and a manifest for {id: (split, group, rows)}."""
    entries = []
    for volume_id, (split, group, rows) in volumes.items():
        path = Path("emb") / f"{volume_id}.emb"
        write_embeddings(root / path, make_matrix(volume_id, rows))
        entries.append(
            VolumeEntry(
                volume_id=volume_id,
                organ_tag="liver",
                split=split,
                slice_embeddings_path=path,
                lesion_flag=group != "G0",
                lesion_group=group,
            )
        )
    manifest = DatasetManifest(dataset_name=name, embedding_dim=dim, volumes=entries)
    save_manifest(root / "manifest.yaml", manifest)
    return load_manifest(root / "manifest.yaml")


@pytest.fixture
def tiny_dataset(temp_dir):
    """Two well separated groups in 2-D, three train and one test volume each."""
    volumes = {
        "a1": ("train", "G0", [[0.0, 0.0], [0.1, 0.0]]),
        "a2": ("train", "G0", [[0.0, 0.2], [0.2, 0.2]]),
        "a3": ("train", "G0", [[0.3, 0.1]]),
        "aq": ("test", "G0", [[0.1, 0.1], [0.0, 0.1]]),
        "b1": ("train", "G2", [[5.0, 5.0], [5.1, 5.0]]),
        "b2": ("train", "G2", [[5.0, 5.2]]),
        "b3": ("train", "G2", [[5.3, 5.1], [5.2, 5.2]]),
        "bq": ("test", "G2", [[5.1, 5.1]]),
    }
    return write_dataset(temp_dir, volumes, dim=2)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    """Default planted-structure dataset (3 groups x 20 volumes, seed 42)."""
    out = tmp_path_factory.mktemp("synth") / "data"
    synth_generate(SynthConfig(), out)
    return out


@pytest.fixture(scope="module")
def synth_manifest(synth_dir):
    return load_manifest(synth_dir / MANIFEST_NAME)
