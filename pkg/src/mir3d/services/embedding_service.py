"""EMB1 embedding file codec.

Layout (little-endian):
    magic   9 bytes  b"3DMIREMB1"
    version u8       1
    dim     u32
    count   u64
    count x (slice_index u32, dim x f32)
"""

import logging
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, TruncationError
from ..models.volume import EmbeddingMatrix
from ..utils.atomic import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"3DMIREMB1"
VERSION = 1
_HEADER = struct.Struct("<9sBIQ")


def _row_dtype(dim: int) -> np.dtype:
    return np.dtype([("slice_index", "<u4"), ("vector", "<f4", (dim,))])


def encode_embeddings(matrix: EmbeddingMatrix) -> bytes:
    """Serialize a matrix to EMB1 bytes."""
    rows = np.empty(len(matrix), dtype=_row_dtype(matrix.dim))
    rows["slice_index"] = matrix.slice_indices
    rows["vector"] = matrix.vectors
    return _HEADER.pack(MAGIC, VERSION, matrix.dim, len(matrix)) + rows.tobytes()


def decode_embeddings(data: bytes, volume_id: str) -> EmbeddingMatrix:
    """Parse EMB1 bytes.

    Raises:
        FormatError: Bad magic, version or dimension
        TruncationError: Body length disagrees with the declared row count
        DataError: A component is NaN or Inf
    """
    if len(data) < _HEADER.size or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{volume_id}: not an EMB1 file (bad magic)")
    _, version, dim, count = _HEADER.unpack_from(data)
    if version != VERSION:
        raise FormatError(f"{volume_id}: unsupported EMB1 version {version}")
    if dim == 0:
        raise FormatError(f"{volume_id}: EMB1 dimension must be positive")

    dtype = _row_dtype(dim)
    body = memoryview(data)[_HEADER.size :]
    if len(body) != count * dtype.itemsize:
        raise TruncationError(
            f"{volume_id}: header declares {count} rows of dim {dim} "
            f"({count * dtype.itemsize} bytes), found {len(body)} bytes"
        )
    rows = np.frombuffer(body, dtype=dtype, count=count)
    return EmbeddingMatrix(
        volume_id=volume_id,
        slice_indices=rows["slice_index"].astype(np.uint32),
        vectors=rows["vector"].astype(np.float32),
    )


def load_embeddings(path: Path, volume_id: str | None = None) -> EmbeddingMatrix:
    """Read an EMB1 file; the volume id defaults to the file stem."""
    logger.debug("loading embeddings %s", path)
    return decode_embeddings(path.read_bytes(), volume_id or path.stem)


def write_embeddings(path: Path, matrix: EmbeddingMatrix) -> None:
    atomic_write_bytes(path, encode_embeddings(matrix))
