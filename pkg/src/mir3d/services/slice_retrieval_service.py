"""Slice-based retrieval: query with every slice, score parent volumes.

Parent volume scores over the pooled slices R(Q):
    freq       |slices of V in R| / |R|
    max_score  max SimScore over slices of V in R
    score_sum  sum of SimScore over slices of V in R
with SimScore(d) = 1 / (1 + d).
"""

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor

from ..config import settings
from ..errors import DataValidationError
from ..models.retrieval import PooledSlice, RankedList, ScoringMethod, SlicePool, VolumeScore
from ..models.volume import EmbeddingMatrix
from .index_service import VectorIndex

logger = logging.getLogger(__name__)

KEY_SEPARATOR = "#"


def slice_key(volume_id: str, slice_index: int) -> str:
    """Index key of one slice."""
    return f"{volume_id}{KEY_SEPARATOR}{slice_index}"


def parent_of(key: str) -> str:
    """Parent volume id of a slice key."""
    return key.rsplit(KEY_SEPARATOR, 1)[0]


def sim_score(distance: float) -> float:
    """1 / (1 + d): strictly decreasing, in (0, 1].

    Raises:
        DataValidationError: Negative distance
    """
    if distance < 0:
        raise DataValidationError(f"distance must be non-negative, got {distance}")
    return 1.0 / (1.0 + distance)


def retrieve_slice_pool(
    query: EmbeddingMatrix,
    index: VectorIndex,
    n_per_slice: int | None = None,
    threads: int | None = None,
) -> SlicePool:
    """Pool the top-n neighbors of every query slice, excluding the query's own slices.

    Raises:
        DataValidationError: Empty query, bad n or dimension mismatch
    """
    n = settings.n_per_slice if n_per_slice is None else n_per_slice
    if len(query) == 0:
        raise DataValidationError(f"query volume '{query.volume_id}' has no slices")
    if n < 1:
        raise DataValidationError(f"n_per_slice must be positive, got {n}")
    if query.dim != index.dim:
        raise DataValidationError(f"query dim {query.dim} does not match index dim {index.dim}")

    owned = sum(1 for key in index.keys if parent_of(key) == query.volume_id)
    depth = n + owned

    def neighbors_of(row: int) -> list[PooledSlice]:
        hits = index.search(query.vectors[row], depth, threads=1)
        kept = [
            PooledSlice(slice_key=hit.key, parent_volume_id=parent_of(hit.key), distance=hit.distance)
            for hit in hits
            if parent_of(hit.key) != query.volume_id
        ]
        return kept[:n]

    threads = settings.threads if threads is None else threads
    rows = range(len(query))
    if threads > 1 and len(query) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            per_slice = list(executor.map(neighbors_of, rows))
    else:
        per_slice = [neighbors_of(row) for row in rows]

    pool = SlicePool(
        query_volume_id=query.volume_id,
        n_per_slice=n,
        num_query_slices=len(query),
        retrieved=[hit for hits in per_slice for hit in hits],
    )
    logger.debug("slice pool for %s: %d slices", query.volume_id, len(pool))
    return pool


def _group_by_parent(pool: SlicePool) -> dict[str, list[float]]:
    if not pool.retrieved:
        raise DataValidationError(f"slice pool for '{pool.query_volume_id}' is empty")
    groups: dict[str, list[float]] = defaultdict(list)
    for hit in pool.retrieved:
        groups[hit.parent_volume_id].append(hit.distance)
    return groups


def score_freq(pool: SlicePool) -> list[VolumeScore]:
    groups = _group_by_parent(pool)
    total = len(pool.retrieved)
    return [
        VolumeScore(volume_id=volume_id, score=len(distances) / total, method="freq")
        for volume_id, distances in sorted(groups.items())
    ]


def score_max(pool: SlicePool) -> list[VolumeScore]:
    groups = _group_by_parent(pool)
    return [
        VolumeScore(volume_id=volume_id, score=max(sim_score(d) for d in distances), method="max_score")
        for volume_id, distances in sorted(groups.items())
    ]


def score_sum(pool: SlicePool) -> list[VolumeScore]:
    groups = _group_by_parent(pool)
    return [
        VolumeScore(volume_id=volume_id, score=sum(sim_score(d) for d in distances), method="score_sum")
        for volume_id, distances in sorted(groups.items())
    ]


SCORERS = {
    "freq": score_freq,
    "max_score": score_max,
    "score_sum": score_sum,
}


def score_pool(pool: SlicePool, method: ScoringMethod) -> list[VolumeScore]:
    return SCORERS[method](pool)


def rank_volumes(scores: list[VolumeScore], k: int, method: str | None = None) -> RankedList:
    """Top-k volumes by (score desc, volume_id asc).

    Raises:
        DataValidationError: k < 1
    """
    if k < 1:
        raise DataValidationError(f"k must be positive, got {k}")
    ordered = sorted(scores, key=lambda s: (-s.score, s.volume_id))[:k]
    name = method or (scores[0].method if scores else "")
    return RankedList.from_pairs(name, [(s.volume_id, s.score) for s in ordered])
