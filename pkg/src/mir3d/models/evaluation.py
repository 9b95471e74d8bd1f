"""Evaluation and synthetic-data models."""

from typing import Literal

from pydantic import BaseModel, Field, model_validator

RelevanceCriterion = Literal["flag", "group"]


class EnsembleConfig(BaseModel):
    """Interleaving order and depth for the multi-modal ensemble."""

    first: Literal["caption", "slice_freq"] = "caption"
    k: int = Field(default=10, ge=1)


class QueryMetrics(BaseModel):
    """Metrics of one query volume."""

    query_id: str
    p_at: dict[int, float]
    ap: float = Field(ge=0.0, le=1.0)


class MetricReport(BaseModel):
    """Per-query and macro-averaged metrics of one method."""

    method: str
    criterion: RelevanceCriterion
    per_query: list[QueryMetrics]
    macro: dict[str, float]
    num_queries: int = Field(gt=0)

    @classmethod
    def from_queries(
        cls,
        method: str,
        criterion: RelevanceCriterion,
        k_list: list[int],
        per_query: list[QueryMetrics],
    ) -> "MetricReport":
        """Assemble a report; queries are ordered by id so the result is order-free."""
        ordered = sorted(per_query, key=lambda q: q.query_id)
        n = len(ordered)
        macro: dict[str, float] = {}
        for k in k_list:
            macro[f"P@{k}"] = sum(q.p_at[k] for q in ordered) / n if n else 0.0
        macro["AP"] = sum(q.ap for q in ordered) / n if n else 0.0
        return cls(method=method, criterion=criterion, per_query=ordered, macro=macro, num_queries=n)


class SynthConfig(BaseModel):
    """Planted-structure dataset parameters."""

    num_groups: int = Field(default=3, ge=2, le=4)
    volumes_per_group: int = Field(default=20, ge=1)
    slices_per_volume: int = Field(default=16, ge=1)
    dim: int = Field(default=32, ge=1)
    cluster_separation: float = Field(default=10.0, gt=0.0)
    noise_sigma: float = Field(default=0.1, gt=0.0)
    seed: int = Field(default=42, ge=0)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    with_masks: bool = False
    mask_spacing_mm: float = Field(default=2.5, gt=0.0)
    mask_size: int = Field(default=32, ge=8)

    @model_validator(mode="after")
    def _check_dim(self) -> "SynthConfig":
        if self.dim < self.num_groups:
            raise ValueError("dim must be at least num_groups to place orthogonal cluster centres")
        return self

    @property
    def separable(self) -> bool:
        return self.cluster_separation > 4 * self.noise_sigma
