"""Dataset manifest models."""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from ..errors import DataValidationError

OrganTag = Literal["liver", "colon", "pancreas", "lung", "other"]
Split = Literal["train", "test"]
LesionGroup = Literal["G0", "G1", "G2", "G3"]

# Reporting order only; no metric depends on it
LESION_GROUP_ORDER: tuple[LesionGroup, ...] = ("G0", "G1", "G2", "G3")


class VolumeEntry(BaseModel):
    """One CT volume of the dataset with its files and ground-truth labels."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    volume_id: str = Field(min_length=1)
    organ_tag: OrganTag
    split: Split
    slice_embeddings_path: Path
    lesion_mask_path: Path | None = None
    organ_mask_path: Path | None = None
    caption_embedding_path: Path | None = None
    lesion_flag: bool
    lesion_group: LesionGroup

    @model_validator(mode="after")
    def _check_labels(self) -> "VolumeEntry":
        if self.lesion_flag != (self.lesion_group != "G0"):
            raise DataValidationError(
                f"volume '{self.volume_id}': lesion_flag={self.lesion_flag} "
                f"contradicts lesion_group={self.lesion_group}"
            )
        return self


class DatasetManifest(BaseModel):
    """Declarative description of volumes, splits, files and labels.

    Relative paths are kept as written; `resolve` anchors them at the
    directory the manifest was loaded from.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset_name: str = Field(min_length=1)
    embedding_dim: int = Field(gt=0)
    volumes: list[VolumeEntry] = Field(default_factory=list)

    _base_dir: Path = PrivateAttr(default_factory=lambda: Path("."))

    @model_validator(mode="after")
    def _check_unique_ids(self) -> "DatasetManifest":
        seen: set[str] = set()
        for entry in self.volumes:
            if entry.volume_id in seen:
                raise DataValidationError(f"duplicate volume_id '{entry.volume_id}'")
            seen.add(entry.volume_id)
        return self

    @property
    def base_dir(self) -> Path:
        return self._base_dir

    def with_base_dir(self, base_dir: Path) -> "DatasetManifest":
        """Return a copy whose relative paths resolve against base_dir."""
        clone = self.model_copy()
        clone._base_dir = base_dir
        return clone

    def resolve(self, path: Path) -> Path:
        return path if path.is_absolute() else self._base_dir / path

    def get(self, volume_id: str) -> VolumeEntry:
        """Look up a volume entry by id.

        Raises:
            DataValidationError: If the id is not in the manifest
        """
        for entry in self.volumes:
            if entry.volume_id == volume_id:
                return entry
        raise DataValidationError(f"unknown volume id '{volume_id}'")

    def entries(self, split: Split) -> list[VolumeEntry]:
        return [entry for entry in self.volumes if entry.split == split]

    def train_ids(self) -> set[str]:
        return {entry.volume_id for entry in self.entries("train")}

    def test_ids(self) -> set[str]:
        return {entry.volume_id for entry in self.entries("test")}
