"""Label volume files and Hounsfield-unit normalization."""

import logging
from pathlib import Path

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from ..errors import FormatError
from ..models.volume import LabelVolume
from ..utils.atomic import atomic_write_bytes, atomic_write_text
from ..utils.files import read_text_file

logger = logging.getLogger(__name__)

DTYPES: dict[str, np.dtype] = {"u8": np.dtype("<u1"), "i16": np.dtype("<i2")}

HU_MIN = -1000
HU_MAX = 1000


class LabelHeader(BaseModel):
    """Sidecar header of a raw label volume."""

    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]
    dtype: str


def raw_path_for(header_path: Path) -> Path:
    """Raw voxel file paired with a header: same stem, `.raw` suffix."""
    return header_path.with_suffix(".raw")


def load_label_volume(header_path: Path, raw_path: Path | None = None) -> LabelVolume:
    """Read a header + raw voxel pair.

    Raises:
        FormatError: Malformed header or raw length mismatch
        DataValidationError: Non-positive spacing
    """
    raw_path = raw_path or raw_path_for(header_path)
    try:
        header = LabelHeader.model_validate(yaml.safe_load(read_text_file(header_path)))
    except (yaml.YAMLError, PydanticValidationError) as e:
        raise FormatError(f"{header_path}: malformed label header: {e}") from e

    if header.dtype not in DTYPES:
        raise FormatError(f"{header_path}: dtype must be one of {sorted(DTYPES)}, got '{header.dtype}'")
    nx, ny, nz = header.dims
    if min(header.dims) <= 0:
        raise FormatError(f"{header_path}: dims must be positive, got {header.dims}")

    dtype = DTYPES[header.dtype]
    data = raw_path.read_bytes()
    expected = nx * ny * nz * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"{raw_path}: expected {expected} bytes for dims {header.dims}, found {len(data)}")

    voxels = np.frombuffer(data, dtype=dtype).reshape(nz, ny, nx)
    logger.debug("loaded label volume %s dims=%s", header_path, header.dims)
    return LabelVolume(voxels=voxels, spacing_mm=header.spacing_mm, dtype=header.dtype)


def write_label_volume(header_path: Path, volume: LabelVolume, raw_path: Path | None = None) -> None:
    raw_path = raw_path or raw_path_for(header_path)
    header = {
        "dims": list(volume.dims),
        "spacing_mm": list(volume.spacing_mm),
        "dtype": volume.dtype,
    }
    atomic_write_bytes(raw_path, volume.voxels.astype(DTYPES[volume.dtype], copy=False).tobytes())
    atomic_write_text(header_path, yaml.safe_dump(header, sort_keys=False))


def normalize_hu(hu: int) -> int:
    """Map HU in [-1000, 1000] to an 8-bit intensity, clamping outside the range.

    Exact integer arithmetic: round_half_up((h + 1000) * 255 / 2000).
    """
    clamped = min(max(int(hu), HU_MIN), HU_MAX)
    numerator = (clamped - HU_MIN) * 255
    return (2 * numerator + 2000) // 4000


def normalize_hu_array(hu: ArrayLike) -> NDArray[np.uint8]:
    """Vectorised `normalize_hu`."""
    clamped = np.clip(np.asarray(hu, dtype=np.int64), HU_MIN, HU_MAX)
    numerator = (clamped - HU_MIN) * 255
    return ((2 * numerator + 2000) // 4000).astype(np.uint8)
