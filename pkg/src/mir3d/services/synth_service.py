"""Planted-structure synthetic datasets.

Each group gets a cluster centre on its own orthonormal direction, scaled by
the configured separation. Every slice of a volume is its group centre plus
isotropic gaussian noise, so with separation well above the noise level the
nearest cluster of any volume is its own.
"""

import logging
from pathlib import Path
from typing import cast

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import DatasetManifest, LesionGroup, VolumeEntry
from ..models.evaluation import SynthConfig
from ..models.volume import EmbeddingMatrix, LabelVolume
from ..utils.atomic import atomic_directory
from .embedding_service import write_embeddings
from .manifest_service import save_manifest
from .volume_service import write_label_volume

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.yaml"
SYNTH_ORGAN = "liver"

# Full length (cm) of the planted lesion per group; G0 volumes stay lesion-free
PLANTED_LENGTH_CM: dict[str, float] = {"G1": 1.5, "G2": 3.0, "G3": 6.0}
# Semi-axis ratios of the planted ellipsoid relative to its longest axis
_AXIS_RATIOS = (1.0, 0.8, 0.6)


def cluster_centres(config: SynthConfig, rng: np.random.Generator) -> NDArray[np.float64]:
    """(num_groups, dim) centres on mutually orthogonal directions."""
    gaussian = rng.standard_normal((config.dim, config.num_groups))
    q, _ = np.linalg.qr(gaussian)
    return config.cluster_separation * q.T


def volume_id_for(group: int, index: int) -> str:
    return f"g{group}v{index:03d}"


def _split_flags(config: SynthConfig, rng: np.random.Generator) -> NDArray[np.bool_]:
    """Stratified train mask over the volumes of one group."""
    n = config.volumes_per_group
    n_train = int(round(config.train_fraction * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    is_train = np.zeros(n, dtype=bool)
    is_train[rng.permutation(n)[:n_train]] = True
    return is_train


def planted_lesion(config: SynthConfig, group: LesionGroup, rng: np.random.Generator) -> LabelVolume:
    """Binary mask holding one solid ellipsoid sized for the group (empty for G0)."""
    size, spacing = config.mask_size, config.mask_spacing_mm
    voxels = np.zeros((size, size, size), dtype=np.uint8)
    # Draw the jitter for every group so the stream does not depend on the label
    jitter = rng.integers(-2, 3, size=3)
    if group in PLANTED_LENGTH_CM:
        semi_mm = PLANTED_LENGTH_CM[group] * 10.0 / 2.0
        ax, ay, az = (semi_mm * r for r in _AXIS_RATIOS)
        cx, cy, cz = (size - 1) / 2.0 + jitter
        z, y, x = np.indices(voxels.shape, dtype=np.float64)
        inside = (
            ((x - cx) * spacing / ax) ** 2
            + ((y - cy) * spacing / ay) ** 2
            + ((z - cz) * spacing / az) ** 2
        ) <= 1.0
        voxels[inside] = 1
    return LabelVolume(voxels=voxels, spacing_mm=(spacing, spacing, spacing), dtype="u8")


def organ_mask(config: SynthConfig) -> LabelVolume:
    """Organ mask covering the grid except a one-voxel border."""
    size, spacing = config.mask_size, config.mask_spacing_mm
    voxels = np.zeros((size, size, size), dtype=np.uint8)
    voxels[1:-1, 1:-1, 1:-1] = 1
    return LabelVolume(voxels=voxels, spacing_mm=(spacing, spacing, spacing), dtype="u8")


def synth_generate(config: SynthConfig, out_dir: Path) -> DatasetManifest:
    """Write a complete synthetic dataset directory and return its manifest.

    The directory holds `manifest.yaml`, `embeddings/`, `captions/` and, with
    masks enabled, `masks/`. It is replaced as a whole, and the same config
    always produces byte-identical files.
    """
    rng = np.random.default_rng(config.seed)
    centres = cluster_centres(config, rng)
    organ = organ_mask(config) if config.with_masks else None

    entries: list[VolumeEntry] = []
    with atomic_directory(out_dir, marker=MANIFEST_NAME) as staging:
        if organ is not None:
            write_label_volume(staging / "masks" / "organ.yaml", organ)

        for group in range(config.num_groups):
            label = cast(LesionGroup, f"G{group}")
            is_train = _split_flags(config, rng)
            for index in range(config.volumes_per_group):
                volume_id = volume_id_for(group, index)
                noise = rng.normal(0.0, config.noise_sigma, size=(config.slices_per_volume, config.dim))
                slices = EmbeddingMatrix(
                    volume_id=volume_id,
                    slice_indices=np.arange(config.slices_per_volume, dtype=np.uint32),
                    vectors=(centres[group] + noise).astype(np.float32),
                )
                caption_noise = rng.normal(0.0, config.noise_sigma, size=(1, config.dim))
                caption = EmbeddingMatrix(
                    volume_id=volume_id,
                    slice_indices=np.zeros(1, dtype=np.uint32),
                    vectors=(centres[group] + caption_noise).astype(np.float32),
                )
                slice_path = Path("embeddings") / f"{volume_id}.emb"
                caption_path = Path("captions") / f"{volume_id}.emb"
                write_embeddings(staging / slice_path, slices)
                write_embeddings(staging / caption_path, caption)

                lesion_path = None
                if config.with_masks:
                    lesion_path = Path("masks") / f"{volume_id}_lesion.yaml"
                    write_label_volume(staging / lesion_path, planted_lesion(config, label, rng))

                entries.append(
                    VolumeEntry(
                        volume_id=volume_id,
                        organ_tag=SYNTH_ORGAN,
                        split="train" if is_train[index] else "test",
                        slice_embeddings_path=slice_path,
                        lesion_mask_path=lesion_path,
                        organ_mask_path=Path("masks") / "organ.yaml" if config.with_masks else None,
                        caption_embedding_path=caption_path,
                        lesion_flag=group != 0,
                        lesion_group=label,
                    )
                )

        manifest = DatasetManifest(
            dataset_name=f"synth-s{config.seed}",
            embedding_dim=config.dim,
            volumes=entries,
        )
        save_manifest(staging / MANIFEST_NAME, manifest)

    train = sum(1 for e in entries if e.split == "train")
    logger.info(
        "synthetic dataset %s: %d volumes (%d train / %d test) in %s",
        manifest.dataset_name, len(entries), train, len(entries) - train, out_dir,
    )
    return manifest.with_base_dir(out_dir)
