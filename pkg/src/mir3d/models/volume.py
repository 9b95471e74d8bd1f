"""Numpy-backed data carriers for embeddings and voxel grids."""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..errors import DataError, DataValidationError


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Ordered per-slice embedding vectors of one volume.

    `vectors` has shape (rows, dim) and is float32, the precision of the
    on-disk format. `slice_indices` is strictly increasing.
    """

    volume_id: str
    slice_indices: NDArray[np.uint32]
    vectors: NDArray[np.float32]

    def __post_init__(self) -> None:
        vectors = np.array(self.vectors, dtype=np.float32, order="C", copy=True)
        indices = np.array(self.slice_indices, dtype=np.uint32, order="C", copy=True)
        if vectors.ndim != 2 or vectors.shape[1] == 0:
            raise DataValidationError(
                f"{self.volume_id}: embeddings must be a (rows, dim) matrix with dim > 0"
            )
        if indices.shape != (vectors.shape[0],):
            raise DataValidationError(f"{self.volume_id}: one slice index per row required")
        if indices.size > 1 and not np.all(np.diff(indices.astype(np.int64)) > 0):
            raise DataValidationError(f"{self.volume_id}: slice indices must be strictly increasing")
        if not np.all(np.isfinite(vectors)):
            raise DataError(f"{self.volume_id}: embedding contains NaN or Inf components")
        vectors.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "slice_indices", indices)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def rows(self) -> list[tuple[int, NDArray[np.float32]]]:
        return [(int(i), v) for i, v in zip(self.slice_indices, self.vectors)]


@dataclass(frozen=True)
class LabelVolume:
    """3D integer label grid with physical voxel spacing.

    `voxels` has shape (nz, ny, nx); in C order that is x-fastest storage.
    """

    voxels: NDArray[np.integer]
    spacing_mm: tuple[float, float, float]
    dtype: str = field(default="u8")

    def __post_init__(self) -> None:
        if self.voxels.ndim != 3 or 0 in self.voxels.shape:
            raise DataValidationError("label volume must be a non-empty 3D grid")
        if len(self.spacing_mm) != 3 or any(s <= 0 for s in self.spacing_mm):
            raise DataValidationError(f"spacing must be three positive values, got {self.spacing_mm}")
        if self.dtype not in ("u8", "i16"):
            raise DataValidationError(f"unsupported dtype '{self.dtype}'")
        voxels = np.array(self.voxels, order="C", copy=True)
        voxels.setflags(write=False)
        object.__setattr__(self, "voxels", voxels)
        object.__setattr__(self, "spacing_mm", tuple(float(s) for s in self.spacing_mm))

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.voxels.shape
        return int(nx), int(ny), int(nz)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing_mm
        return sx * sy * sz

    def is_binary(self) -> bool:
        return bool(np.all((self.voxels == 0) | (self.voxels == 1)))

    def same_grid(self, other: "LabelVolume") -> bool:
        return self.dims == other.dims and self.spacing_mm == other.spacing_mm
