"""Dataset manifest parsing, serialization and embedding access."""

import logging
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
import yaml
from pydantic import ValidationError as PydanticValidationError

from ..errors import DataValidationError, ManifestParseError
from ..models.dataset import DatasetManifest, LesionGroup, VolumeEntry
from ..models.volume import EmbeddingMatrix
from ..utils.atomic import atomic_write_text
from ..utils.files import read_text_file
from .embedding_service import load_embeddings

logger = logging.getLogger(__name__)

_LABEL_FIELDS = ("lesion_flag", "lesion_group")


def _raise_from_validation(exc: PydanticValidationError) -> NoReturn:
    """Translate pydantic errors into the engine's hierarchy."""
    for err in exc.errors():
        cause = (err.get("ctx") or {}).get("error")
        if isinstance(cause, DataValidationError):
            raise cause from exc
        if err["type"] == "missing" and err["loc"] and err["loc"][-1] in _LABEL_FIELDS:
            where = ".".join(str(part) for part in err["loc"])
            raise DataValidationError(f"missing ground-truth label at {where}") from exc
    first = exc.errors()[0]
    field = ".".join(str(part) for part in first["loc"])
    raise ManifestParseError(first["msg"], field=field or None) from exc


def parse_manifest(text: str) -> DatasetManifest:
    """Parse and validate a manifest document.

    Raises:
        ManifestParseError: Malformed document (carries line or field)
        DataValidationError: Duplicate ids or label inconsistency
    """
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ManifestParseError(str(e.problem or e), line=line) from e
    except yaml.YAMLError as e:
        raise ManifestParseError(str(e)) from e

    if not isinstance(data, dict):
        raise ManifestParseError("manifest must be a mapping at the top level")

    try:
        return DatasetManifest.model_validate(data)
    except PydanticValidationError as e:
        _raise_from_validation(e)


def dump_manifest(manifest: DatasetManifest) -> str:
    """Serialize a manifest; `parse_manifest(dump_manifest(m)) == m`."""
    data: dict[str, Any] = manifest.model_dump(mode="json")
    data["volumes"] = [
        {key: value for key, value in volume.items() if value is not None}
        for volume in data["volumes"]
    ]
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)


def load_manifest(path: Path) -> DatasetManifest:
    """Read a manifest file; relative paths resolve against its directory."""
    manifest = parse_manifest(read_text_file(path))
    logger.debug("manifest %s: %d volumes", manifest.dataset_name, len(manifest.volumes))
    return manifest.with_base_dir(path.parent)


def save_manifest(path: Path, manifest: DatasetManifest) -> None:
    atomic_write_text(path, dump_manifest(manifest))


def load_volume_embeddings(manifest: DatasetManifest, entry: VolumeEntry) -> EmbeddingMatrix:
    """Load one volume's slice embeddings and check them against the manifest.

    Raises:
        DataValidationError: Empty matrix or dimension differing from the manifest
    """
    matrix = load_embeddings(manifest.resolve(entry.slice_embeddings_path), entry.volume_id)
    if len(matrix) == 0:
        raise DataValidationError(f"volume '{entry.volume_id}' has no slice embeddings")
    if matrix.dim != manifest.embedding_dim:
        raise DataValidationError(
            f"volume '{entry.volume_id}' has embedding dim {matrix.dim}, "
            f"manifest declares {manifest.embedding_dim}"
        )
    return matrix


def with_ground_truth(
    manifest: DatasetManifest, labels: dict[str, tuple[bool, LesionGroup]]
) -> DatasetManifest:
    """Return a copy with lesion_flag/lesion_group replaced for the given volumes."""
    volumes = [
        entry.model_copy(update={"lesion_flag": labels[entry.volume_id][0], "lesion_group": labels[entry.volume_id][1]})
        if entry.volume_id in labels
        else entry
        for entry in manifest.volumes
    ]
    updated = DatasetManifest(
        dataset_name=manifest.dataset_name,
        embedding_dim=manifest.embedding_dim,
        volumes=volumes,
    )
    return updated.with_base_dir(manifest.base_dir)


def augment_train_split(
    manifest: DatasetManifest,
    donors: list[DatasetManifest],
    count: int,
    seed: int,
    include_small_lesions: bool = True,
) -> DatasetManifest:
    """Append `count` donor volumes from other datasets to the train split.

    Eligible donors are lesion-free (G0) volumes and, unless
    `include_small_lesions` is false, single small-lesion (G1) volumes.
    Draws are seeded and made from candidates sorted by (dataset, volume id). Donor paths are anchored
    at their own manifest so the result resolves them from anywhere.

    Raises:
        DataValidationError: Too few candidates, id collision or dimension mismatch
    """
    if count < 0:
        raise DataValidationError(f"count must be non-negative, got {count}")
    accepted: set[LesionGroup] = {"G0", "G1"} if include_small_lesions else {"G0"}

    candidates: list[tuple[DatasetManifest, VolumeEntry]] = []
    for donor in sorted(donors, key=lambda d: d.dataset_name):
        if donor.embedding_dim != manifest.embedding_dim:
            raise DataValidationError(
                f"donor '{donor.dataset_name}' has embedding dim {donor.embedding_dim}, "
                f"expected {manifest.embedding_dim}"
            )
        candidates.extend(
            (donor, entry)
            for entry in sorted(donor.volumes, key=lambda e: e.volume_id)
            if entry.lesion_group in accepted
        )
    if count > len(candidates):
        raise DataValidationError(f"requested {count} donor volumes, only {len(candidates)} eligible")

    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(candidates), size=count, replace=False).tolist()) if count else []
    existing = {entry.volume_id for entry in manifest.volumes}
    added: list[VolumeEntry] = []
    for i in picks:
        donor, entry = candidates[i]
        if entry.volume_id in existing:
            raise DataValidationError(
                f"donor volume '{entry.volume_id}' from '{donor.dataset_name}' collides with an existing id"
            )
        existing.add(entry.volume_id)
        paths = {
            name: donor.resolve(path).absolute()
            for name in ("slice_embeddings_path", "lesion_mask_path", "organ_mask_path", "caption_embedding_path")
            if (path := getattr(entry, name)) is not None
        }
        added.append(entry.model_copy(update={"split": "train", **paths}))

    logger.info("augmented %s train split with %d donor volumes", manifest.dataset_name, len(added))
    augmented = DatasetManifest(
        dataset_name=manifest.dataset_name,
        embedding_dim=manifest.embedding_dim,
        volumes=[*manifest.volumes, *added],
    )
    return augmented.with_base_dir(manifest.base_dir)
