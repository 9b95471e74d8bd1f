"""Retrieval engine: one entry point for every method over a train index."""

import logging
from pathlib import Path
from typing import cast

import numpy as np
from numpy.typing import NDArray

from ..config import Settings, settings
from ..errors import DataValidationError
from ..models.dataset import DatasetManifest, VolumeEntry
from ..models.evaluation import EnsembleConfig
from ..models.retrieval import (
    POOLING_METHODS,
    RETRIEVAL_METHODS,
    PoolingMethod,
    RankedList,
    ScoringMethod,
)
from ..models.volume import EmbeddingMatrix
from .caption_service import caption_query, ensemble_interleave
from .embedding_service import load_embeddings
from .index_service import IndexBuilder, VectorIndex, load_index, save_index
from .manifest_service import load_volume_embeddings
from .slice_retrieval_service import (
    parent_of,
    rank_volumes,
    retrieve_slice_pool,
    score_pool,
    slice_key,
)
from .volume_retrieval_service import build_volume_index, index_kind, volume_search

logger = logging.getLogger(__name__)

SLICE_SCORING: dict[str, ScoringMethod] = {
    "slice-freq": "freq",
    "slice-max": "max_score",
    "slice-sum": "score_sum",
}


def pooling_of(method: str) -> PoolingMethod:
    return cast(PoolingMethod, method.removeprefix("volume-"))


def index_name_for(method: str) -> str:
    """Persisted index a retrieval method reads."""
    if method.startswith("volume-"):
        return method
    return "slice"


def build_slice_index(manifest: DatasetManifest) -> VectorIndex:
    """Every slice of every train volume, keyed `<volume_id>#<slice_index>`."""
    builder = IndexBuilder(dim=manifest.embedding_dim, kind="slice")
    for entry in manifest.entries("train"):
        matrix = load_volume_embeddings(manifest, entry)
        for slice_index, vector in matrix.rows():
            builder.add(slice_key(entry.volume_id, slice_index), vector)
    index = builder.freeze()
    logger.info("built slice index: %d slices", len(index))
    return index


class RetrievalEngine:
    """Holds the train indexes of one manifest and ranks queries against them."""

    def __init__(
        self,
        manifest: DatasetManifest,
        slice_index: VectorIndex | None = None,
        volume_indexes: dict[PoolingMethod, VectorIndex] | None = None,
        config: Settings | None = None,
    ) -> None:
        self.manifest = manifest
        self.slice_index = slice_index
        self.volume_indexes = volume_indexes or {}
        self.config = config or settings

    # ── construction ─────────────────────────────────────────

    @classmethod
    def from_manifest(
        cls,
        manifest: DatasetManifest,
        methods: list[str] | None = None,
        config: Settings | None = None,
    ) -> "RetrievalEngine":
        """Build, in memory, the indexes the given methods need."""
        methods = methods or list(RETRIEVAL_METHODS)
        needs_slice = any(index_name_for(m) == "slice" for m in methods)
        slice_index = build_slice_index(manifest) if needs_slice else None
        volume_indexes = {
            pooling_of(m): build_volume_index(manifest, pooling_of(m))
            for m in methods
            if m.startswith("volume-")
        }
        return cls(manifest, slice_index, volume_indexes, config)

    @classmethod
    def from_index_dir(
        cls,
        manifest: DatasetManifest,
        index_dir: Path,
        methods: list[str],
        config: Settings | None = None,
    ) -> "RetrievalEngine":
        """Load persisted indexes for the given methods.

        Raises:
            DataValidationError: An index a method needs is missing
        """
        engine = cls(manifest, config=config)
        for method in methods:
            _check_method(method)
            name = index_name_for(method)
            if not (index_dir / f"{name}.meta").exists():
                raise DataValidationError(f"missing index '{name}' for method '{method}' in {index_dir}")
            if name == "slice":
                if engine.slice_index is None:
                    engine.slice_index = load_index(index_dir, name)
            else:
                pooling = pooling_of(method)
                if pooling not in engine.volume_indexes:
                    engine.volume_indexes[pooling] = load_index(index_dir, name)
        return engine

    def save(self, index_dir: Path) -> None:
        if self.slice_index is not None:
            save_index(self.slice_index, index_dir, "slice")
        for pooling, index in self.volume_indexes.items():
            save_index(index, index_dir, index_kind(pooling))

    # ── checks ───────────────────────────────────────────────

    def _indexes(self) -> list[VectorIndex]:
        indexes = list(self.volume_indexes.values())
        if self.slice_index is not None:
            indexes.append(self.slice_index)
        return indexes

    @staticmethod
    def _volume_ids_of(index: VectorIndex) -> set[str]:
        if index.kind == "slice":
            return {parent_of(key) for key in index.keys}
        return set(index.keys)

    def indexed_volume_ids(self) -> list[str]:
        ids: set[str] = set()
        for index in self._indexes():
            ids |= self._volume_ids_of(index)
        return sorted(ids)

    def check_no_leakage(self) -> None:
        """Fail if any index holds a test volume or a volume outside the train split.

        Raises:
            DataValidationError: Split leakage
        """
        test_ids = self.manifest.test_ids()
        train_ids = self.manifest.train_ids()
        for index in self._indexes():
            volumes = self._volume_ids_of(index)
            leaked = sorted(volumes & test_ids)
            if leaked:
                raise DataValidationError(f"split leakage: {index.kind} index contains test volumes {', '.join(leaked)}")
            unknown = sorted(volumes - train_ids)
            if unknown:
                raise DataValidationError(f"{index.kind} index contains volumes not in the train split: {', '.join(unknown)}")

    # ── ranking ──────────────────────────────────────────────

    def _require_slice_index(self) -> VectorIndex:
        if self.slice_index is None:
            raise DataValidationError("slice index not loaded")
        return self.slice_index

    def _require_volume_index(self, pooling: PoolingMethod) -> VectorIndex:
        if pooling not in self.volume_indexes:
            raise DataValidationError(f"index '{index_kind(pooling)}' not loaded")
        return self.volume_indexes[pooling]

    def _with_tail(self, ranked: RankedList, index: VectorIndex) -> RankedList:
        """Append indexed volumes the method did not score, by id, with score 0."""
        present = set(ranked.volume_ids())
        tail = sorted(self._volume_ids_of(index) - present)
        pairs = [(item.volume_id, item.score) for item in ranked.items] + [(v, 0.0) for v in tail]
        return RankedList.from_pairs(ranked.method, pairs)

    def load_caption_embedding(self, entry: VolumeEntry) -> NDArray[np.float32]:
        if entry.caption_embedding_path is None:
            raise DataValidationError(f"volume '{entry.volume_id}' has no caption embedding")
        return self.caption_vector(load_embeddings(self.manifest.resolve(entry.caption_embedding_path), entry.volume_id))

    @staticmethod
    def caption_vector(matrix: EmbeddingMatrix) -> NDArray[np.float32]:
        if len(matrix) == 0:
            raise DataValidationError(f"caption embedding file for '{matrix.volume_id}' is empty")
        return matrix.vectors[0]

    def rank_slices(self, method: str, query: EmbeddingMatrix, k: int | None = None) -> RankedList:
        index = self._require_slice_index()
        pool = retrieve_slice_pool(query, index, self.config.n_per_slice)
        scores = score_pool(pool, SLICE_SCORING[method]) if pool.retrieved else []
        ranked = rank_volumes(scores, max(len(scores), 1), method=method)
        full = self._with_tail(ranked, index)
        return _truncate(full, k)

    def rank_caption(self, caption_embedding: NDArray[np.float32], k: int | None = None) -> RankedList:
        index = self._require_slice_index()
        ranked = caption_query(caption_embedding, index, self.config.caption_n)
        return _truncate(self._with_tail(ranked, index), k)

    def rank_ensemble(
        self,
        query: EmbeddingMatrix,
        caption_embedding: NDArray[np.float32],
        k: int | None = None,
    ) -> RankedList:
        captions = self.rank_caption(caption_embedding)
        slices = self.rank_slices("slice-freq", query)
        depth = max(len(self.indexed_volume_ids()), 1) if k is None else k
        config = EnsembleConfig(first=self.config.ensemble_first, k=depth)
        return ensemble_interleave(captions, slices, config)

    def rank_embeddings(
        self,
        method: str,
        query: EmbeddingMatrix | None,
        caption_embedding: NDArray[np.float32] | None = None,
        k: int | None = None,
    ) -> RankedList:
        """Rank from already loaded query inputs; `k=None` ranks every indexed volume."""
        _check_method(method)
        if k is not None and k < 1:
            raise DataValidationError(f"k must be positive, got {k}")
        if method in ("caption", "ensemble") and caption_embedding is None:
            raise DataValidationError(f"method '{method}' needs a caption embedding")
        if method != "caption" and query is None:
            raise DataValidationError(f"method '{method}' needs a query volume")

        if method == "caption":
            assert caption_embedding is not None
            return self.rank_caption(caption_embedding, k)
        assert query is not None
        if method == "ensemble":
            assert caption_embedding is not None
            return self.rank_ensemble(query, caption_embedding, k)
        if method in SLICE_SCORING:
            return self.rank_slices(method, query, k)
        pooling = pooling_of(method)
        return volume_search(self._require_volume_index(pooling), query, pooling, k)

    def rank(self, method: str, entry: VolumeEntry, k: int | None = None) -> RankedList:
        """Rank for a manifest volume, loading whatever inputs the method needs."""
        _check_method(method)
        query = load_volume_embeddings(self.manifest, entry) if method != "caption" else None
        caption = self.load_caption_embedding(entry) if method in ("caption", "ensemble") else None
        return self.rank_embeddings(method, query, caption, k)


def _check_method(method: str) -> None:
    if method not in RETRIEVAL_METHODS:
        raise DataValidationError(f"unknown method '{method}', expected one of {', '.join(RETRIEVAL_METHODS)}")
    if method.startswith("volume-") and pooling_of(method) not in POOLING_METHODS:
        raise DataValidationError(f"unknown pooling in '{method}'")


def _truncate(ranked: RankedList, k: int | None) -> RankedList:
    if k is None:
        return ranked
    return RankedList(method=ranked.method, items=ranked.items[:k])
