"""Exact Euclidean nearest-neighbor index.

Vectors are held at float32 precision (the EMB1 storage precision) and
distances are computed in float64. Entries are kept sorted by key, so a
stable sort on distance yields the (distance asc, key asc) order directly.
"""

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..config import settings
from ..errors import DataValidationError, FormatError
from ..models.retrieval import Neighbor
from ..models.volume import EmbeddingMatrix
from ..utils.atomic import atomic_write_text
from ..utils.files import read_text_file
from .embedding_service import load_embeddings, write_embeddings

logger = logging.getLogger(__name__)

INDEX_KIND = re.compile(r"^(slice|volume-(median|max|average|std))$")

# Below this many entries a parallel scan is not worth the thread overhead
_PARALLEL_MIN_ENTRIES = 4096


def _as_vector(values: ArrayLike) -> NDArray[np.float64]:
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise DataValidationError(f"expected a 1-D vector, got shape {vector.shape}")
    return vector


def _row_distances(matrix: NDArray[np.float64], query: NDArray[np.float64]) -> NDArray[np.float64]:
    """Euclidean distance from query to every row; the single distance kernel."""
    diff = matrix - query[np.newaxis, :]
    return np.sqrt(np.sum(diff * diff, axis=1))


def euclidean_distance(a: ArrayLike, b: ArrayLike) -> float:
    """sqrt(sum((a_i - b_i)^2)) in float64.

    Raises:
        DataValidationError: Length mismatch or non-finite components
    """
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        raise DataValidationError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    if not (np.all(np.isfinite(va)) and np.all(np.isfinite(vb))):
        raise DataValidationError("vectors must have finite components")
    return float(_row_distances(vb[np.newaxis, :], va)[0])


@dataclass(frozen=True)
class VectorIndex:
    """Frozen, searchable index. Build it with `build_index` or `IndexBuilder`."""

    dim: int
    keys: tuple[str, ...]
    vectors: NDArray[np.float64]
    kind: str = "slice"

    @property
    def frozen(self) -> bool:
        return True

    def __len__(self) -> int:
        return len(self.keys)

    def search(self, query: ArrayLike, k: int, threads: int | None = None) -> list[Neighbor]:
        return search(self, query, k, threads=threads)


@dataclass
class IndexBuilder:
    """Single-writer build phase of a VectorIndex."""

    dim: int
    kind: str = "slice"
    _items: dict[str, NDArray[np.float32]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise DataValidationError(f"index dimension must be positive, got {self.dim}")
        if not INDEX_KIND.match(self.kind):
            raise DataValidationError(f"unknown index kind '{self.kind}'")

    def add(self, key: str, vector: ArrayLike) -> None:
        """Add one entry.

        Raises:
            DataValidationError: Duplicate key, wrong length or non-finite vector
        """
        if key in self._items:
            raise DataValidationError(f"duplicate index key '{key}'")
        values = np.asarray(vector, dtype=np.float32)
        if values.shape != (self.dim,):
            raise DataValidationError(f"key '{key}': expected dim {self.dim}, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataValidationError(f"key '{key}': vector has non-finite components")
        self._items[key] = values

    def freeze(self) -> VectorIndex:
        keys = tuple(sorted(self._items))
        if keys:
            matrix = np.stack([self._items[key] for key in keys]).astype(np.float64)
        else:
            matrix = np.empty((0, self.dim), dtype=np.float64)
        matrix.setflags(write=False)
        logger.debug("froze %s index: %d entries, dim %d", self.kind, len(keys), self.dim)
        return VectorIndex(dim=self.dim, keys=keys, vectors=matrix, kind=self.kind)


def build_index(items: list[tuple[str, ArrayLike]], dim: int, kind: str = "slice") -> VectorIndex:
    """Build a frozen index from (key, vector) pairs."""
    builder = IndexBuilder(dim=dim, kind=kind)
    for key, vector in items:
        builder.add(key, vector)
    return builder.freeze()


def _top_k(distances: NDArray[np.float64], offset: int, k: int) -> tuple[NDArray[np.float64], NDArray[np.intp]]:
    order = np.argsort(distances, kind="stable")[:k]
    return distances[order], order + offset


def search(index: VectorIndex, query: ArrayLike, k: int, threads: int | None = None) -> list[Neighbor]:
    """Exact k-NN: min(k, |index|) neighbors by (distance asc, key asc).

    Large indexes may be scanned in partitions on several threads; the merge
    reproduces the sequential order exactly.

    Raises:
        DataValidationError: k < 1 or query dimension mismatch
    """
    if k < 1:
        raise DataValidationError(f"k must be positive, got {k}")
    vector = _as_vector(query)
    if vector.shape[0] != index.dim:
        raise DataValidationError(f"query dim {vector.shape[0]} does not match index dim {index.dim}")
    n = len(index)
    if n == 0:
        return []

    threads = settings.threads if threads is None else threads
    if threads <= 1 or n < _PARALLEL_MIN_ENTRIES:
        dists, order = _top_k(_row_distances(index.vectors, vector), 0, k)
    else:
        bounds = np.linspace(0, n, threads + 1, dtype=np.intp)
        chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

        def scan(chunk: tuple[int, int]) -> tuple[NDArray[np.float64], NDArray[np.intp]]:
            lo, hi = chunk
            return _top_k(_row_distances(index.vectors[lo:hi], vector), lo, k)

        with ThreadPoolExecutor(max_workers=threads) as executor:
            partial = list(executor.map(scan, chunks))
        all_dists = np.concatenate([d for d, _ in partial])
        all_idx = np.concatenate([i for _, i in partial])
        merged = np.lexsort((all_idx, all_dists))[:k]
        dists, order = all_dists[merged], all_idx[merged]

    return [Neighbor(key=index.keys[i], distance=float(d)) for d, i in zip(dists, order)]


# ── persistence ──────────────────────────────────────────────


def index_paths(directory: Path, name: str) -> tuple[Path, Path, Path]:
    """(vectors .emb, keys .keys, metadata .meta) for an index name."""
    return directory / f"{name}.emb", directory / f"{name}.keys", directory / f"{name}.meta"


def save_index(index: VectorIndex, directory: Path, name: str | None = None) -> None:
    """Persist as EMB1 (record id = row position) plus keys and a one-line metadata sidecar."""
    emb_path, keys_path, meta_path = index_paths(directory, name or index.kind)
    matrix = EmbeddingMatrix(
        volume_id=index.kind,
        slice_indices=np.arange(len(index), dtype=np.uint32),
        vectors=index.vectors.astype(np.float32),
    )
    write_embeddings(emb_path, matrix)
    atomic_write_text(keys_path, "".join(f"{key}\n" for key in index.keys))
    meta = {"kind": index.kind, "dim": index.dim, "count": len(index)}
    atomic_write_text(meta_path, json.dumps(meta, sort_keys=True) + "\n")
    logger.info("saved %s index (%d entries) to %s", index.kind, len(index), emb_path)


def load_index(directory: Path, name: str) -> VectorIndex:
    """Rebuild a persisted index.

    Raises:
        FileNotFoundError: Missing index files
        FormatError: Metadata, keys and vectors disagree
    """
    emb_path, keys_path, meta_path = index_paths(directory, name)
    try:
        meta = json.loads(read_text_file(meta_path))
        kind, dim, count = str(meta["kind"]), int(meta["dim"]), int(meta["count"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{meta_path}: malformed index metadata") from e

    keys = read_text_file(keys_path).splitlines()
    matrix = load_embeddings(emb_path, kind)
    if len(keys) != count or len(matrix) != count or (count and matrix.dim != dim):
        raise FormatError(f"{emb_path}: index files disagree on size or dimension")
    if list(keys) != sorted(keys):
        raise FormatError(f"{keys_path}: keys are not in sorted order")

    builder = IndexBuilder(dim=dim, kind=kind)
    for key, vector in zip(keys, matrix.vectors):
        builder.add(key, vector)
    return builder.freeze()
