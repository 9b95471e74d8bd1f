"""Retrieval result models."""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field

PoolingMethod = Literal["median", "max", "average", "std"]
POOLING_METHODS: tuple[PoolingMethod, ...] = ("median", "max", "average", "std")

ScoringMethod = Literal["freq", "max_score", "score_sum"]

RetrievalMethod = Literal[
    "slice-freq",
    "slice-max",
    "slice-sum",
    "volume-median",
    "volume-max",
    "volume-average",
    "volume-std",
    "caption",
    "ensemble",
]
RETRIEVAL_METHODS: tuple[RetrievalMethod, ...] = (
    "slice-freq",
    "slice-max",
    "slice-sum",
    "volume-median",
    "volume-max",
    "volume-average",
    "volume-std",
    "caption",
    "ensemble",
)


@dataclass(frozen=True, slots=True)
class Neighbor:
    """One search hit."""

    key: str
    distance: float


@dataclass(frozen=True, slots=True)
class PooledSlice:
    """A retrieved slice with its parent volume."""

    slice_key: str
    parent_volume_id: str
    distance: float


@dataclass
class SlicePool:
    """Slices retrieved for every slice of one query volume."""

    query_volume_id: str
    n_per_slice: int
    num_query_slices: int
    retrieved: list[PooledSlice] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.retrieved)


@dataclass(frozen=True)
class PooledEmbedding:
    """One representative vector for a whole volume."""

    volume_id: str
    method: PoolingMethod
    vector: NDArray[np.float64]


class VolumeScore(BaseModel):
    """Aggregated score of one parent volume."""

    volume_id: str
    score: float
    method: ScoringMethod


class RankedItem(BaseModel):
    """One row of a ranking."""

    rank: int = Field(ge=1)
    volume_id: str
    score: float


class RankedList(BaseModel):
    """Ordered retrieval result for one query."""

    method: str
    items: list[RankedItem] = Field(default_factory=list)

    def volume_ids(self) -> list[str]:
        return [item.volume_id for item in self.items]

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_pairs(cls, method: str, pairs: list[tuple[str, float]]) -> "RankedList":
        """Build a ranking from (volume_id, score) pairs already in rank order."""
        return cls(
            method=method,
            items=[
                RankedItem(rank=i, volume_id=volume_id, score=score)
                for i, (volume_id, score) in enumerate(pairs, start=1)
            ],
        )
