"""Volume-based retrieval: pool slice embeddings into one vector per volume."""

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.typing import NDArray

from ..config import settings
from ..errors import DataValidationError
from ..models.dataset import DatasetManifest, Split
from ..models.retrieval import POOLING_METHODS, PooledEmbedding, PoolingMethod, RankedList
from ..models.volume import EmbeddingMatrix
from .index_service import IndexBuilder, VectorIndex
from .manifest_service import load_volume_embeddings
from .slice_retrieval_service import sim_score

logger = logging.getLogger(__name__)

# Element-wise reductions over the slice axis. std is the population form.
_POOLERS: dict[PoolingMethod, Callable[[NDArray[np.float64]], NDArray[np.float64]]] = {
    "median": lambda rows: np.median(rows, axis=0),
    "max": lambda rows: np.max(rows, axis=0),
    "average": lambda rows: np.mean(rows, axis=0),
    "std": lambda rows: np.std(rows, axis=0, ddof=0),
}


def index_kind(method: PoolingMethod) -> str:
    return f"volume-{method}"


def pool_embeddings(matrix: EmbeddingMatrix, method: PoolingMethod) -> PooledEmbedding:
    """Reduce all slice vectors component-wise with the given method.

    Raises:
        DataValidationError: Empty matrix or unknown method
    """
    if len(matrix) == 0:
        raise DataValidationError(f"cannot pool empty embedding matrix of '{matrix.volume_id}'")
    if method not in _POOLERS:
        raise DataValidationError(f"unknown pooling method '{method}', expected one of {POOLING_METHODS}")
    rows = matrix.vectors.astype(np.float64)
    vector = np.asarray(_POOLERS[method](rows), dtype=np.float64)
    return PooledEmbedding(volume_id=matrix.volume_id, method=method, vector=vector)


def build_volume_index(
    manifest: DatasetManifest,
    method: PoolingMethod,
    split: Split = "train",
    threads: int | None = None,
) -> VectorIndex:
    """One pooled vector per volume of the split, keyed by volume id.

    Only entries of `split` are ever loaded, so test volumes cannot leak
    into a train index.
    """
    entries = manifest.entries(split)
    assert all(entry.split == split for entry in entries)

    def pooled(entry_index: int) -> PooledEmbedding:
        entry = entries[entry_index]
        return pool_embeddings(load_volume_embeddings(manifest, entry), method)

    threads = settings.threads if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            vectors = list(executor.map(pooled, range(len(entries))))
    else:
        vectors = [pooled(i) for i in range(len(entries))]

    builder = IndexBuilder(dim=manifest.embedding_dim, kind=index_kind(method))
    for embedding in vectors:
        builder.add(embedding.volume_id, embedding.vector)
    index = builder.freeze()
    logger.info("built %s index over %d %s volumes", index.kind, len(index), split)
    return index


def volume_search(
    index: VectorIndex,
    query: EmbeddingMatrix,
    method: PoolingMethod,
    k: int | None = None,
) -> RankedList:
    """Pool the query with `method` and rank indexed volumes by SimScore.

    The query is pooled on the fly and never added to the index. `k=None`
    ranks the whole index.

    Raises:
        DataValidationError: Index was built with another pooling method
    """
    expected = index_kind(method)
    if index.kind != expected:
        raise DataValidationError(f"pooling method mismatch: index is '{index.kind}', query uses '{expected}'")
    pooled = pool_embeddings(query, method)
    # Same float32 rounding the indexed vectors went through
    vector = pooled.vector.astype(np.float32)
    depth = k if k is not None else max(len(index), 1)
    hits = index.search(vector, depth)
    return RankedList.from_pairs(expected, [(hit.key, sim_score(hit.distance)) for hit in hits])
