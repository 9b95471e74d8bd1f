"""Lesion and caption records."""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, model_validator


@dataclass(frozen=True)
class LesionComponent:
    """One connected set of foreground voxels.

    `voxel_coords` has shape (n, 3) with columns (x, y, z).
    """

    lesion_id: int
    voxel_coords: NDArray[np.int64]

    @property
    def voxel_count(self) -> int:
        return int(self.voxel_coords.shape[0])


class LesionRecord(BaseModel):
    """Morphology of one connected lesion."""

    lesion_id: int = Field(ge=1)
    volume_id: str
    organ: str
    organ_overlap_fraction: float = Field(ge=0.0, le=1.0)
    voxel_count: int = Field(gt=0)
    physical_volume_mm3: float = Field(gt=0.0)
    centroid_mm: tuple[float, float, float]
    ellipsoid_axes_mm: tuple[float, float, float]
    length_cm: float = Field(gt=0.0)
    elongation: float = Field(ge=1.0)
    flatness: float = Field(ge=1.0)

    @model_validator(mode="after")
    def _check_axes(self) -> "LesionRecord":
        a, b, c = self.ellipsoid_axes_mm
        if not a >= b >= c > 0:
            raise ValueError(f"ellipsoid axes must satisfy a >= b >= c > 0, got {self.ellipsoid_axes_mm}")
        return self


class SliceMetrics(BaseModel):
    """2D lesion measurements on one axial slice."""

    volume_id: str
    slice_index: int = Field(ge=0)
    total_lesion_area_mm2: float = Field(ge=0.0)
    lesion_count_2d: int = Field(ge=0)
    circularities: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_counts(self) -> "SliceMetrics":
        if self.lesion_count_2d != len(self.circularities):
            raise ValueError("lesion_count_2d must equal the number of circularities")
        if (self.total_lesion_area_mm2 == 0) != (self.lesion_count_2d == 0):
            raise ValueError("area is zero exactly when no lesion is present")
        return self


class CaptionRecord(BaseModel):
    """Generated caption for one volume."""

    volume_id: str
    organ: str
    num_lesions: int = Field(ge=0)
    largest_length_cm: float | None = None
    text: str

    @model_validator(mode="after")
    def _check_length(self) -> "CaptionRecord":
        if (self.largest_length_cm is not None) != (self.num_lesions > 0):
            raise ValueError("largest_length_cm is present exactly when lesions are present")
        return self
