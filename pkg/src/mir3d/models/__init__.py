"""Data models module."""

from .dataset import LESION_GROUP_ORDER, DatasetManifest, LesionGroup, OrganTag, Split, VolumeEntry
from .evaluation import EnsembleConfig, MetricReport, QueryMetrics, RelevanceCriterion, SynthConfig
from .lesion import CaptionRecord, LesionComponent, LesionRecord, SliceMetrics
from .retrieval import (
    POOLING_METHODS,
    RETRIEVAL_METHODS,
    Neighbor,
    PooledEmbedding,
    PooledSlice,
    PoolingMethod,
    RankedItem,
    RankedList,
    RetrievalMethod,
    ScoringMethod,
    SlicePool,
    VolumeScore,
)
from .volume import EmbeddingMatrix, LabelVolume

__all__ = [
    "LESION_GROUP_ORDER",
    "POOLING_METHODS",
    "RETRIEVAL_METHODS",
    "CaptionRecord",
    "DatasetManifest",
    "EmbeddingMatrix",
    "EnsembleConfig",
    "LabelVolume",
    "LesionComponent",
    "LesionGroup",
    "LesionRecord",
    "MetricReport",
    "Neighbor",
    "OrganTag",
    "PooledEmbedding",
    "PooledSlice",
    "PoolingMethod",
    "QueryMetrics",
    "RankedItem",
    "RankedList",
    "RelevanceCriterion",
    "RetrievalMethod",
    "ScoringMethod",
    "SlicePool",
    "SliceMetrics",
    "Split",
    "SynthConfig",
    "VolumeEntry",
    "VolumeScore",
]
