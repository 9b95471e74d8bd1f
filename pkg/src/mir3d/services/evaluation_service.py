"""Ranked-retrieval metrics and experiment runs over the test split."""

import logging
import math
from collections import defaultdict
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING

from ..config import settings
from ..errors import DataValidationError
from ..models.dataset import DatasetManifest, VolumeEntry
from ..models.evaluation import MetricReport, QueryMetrics, RelevanceCriterion
from ..models.lesion import LesionRecord
from ..models.retrieval import RETRIEVAL_METHODS, RankedList

if TYPE_CHECKING:
    from .engine import RetrievalEngine

logger = logging.getLogger(__name__)

Relevance = Callable[[str], bool]


def precision_at_k(ranked: RankedList, is_relevant: Relevance, k: int) -> float:
    """Relevant hits among the first k, divided by k.

    Missing slots of a list shorter than k count as irrelevant.

    Raises:
        DataValidationError: k < 1
    """
    if k < 1:
        raise DataValidationError(f"k must be positive, got {k}")
    hits = sum(1 for volume_id in ranked.volume_ids()[:k] if is_relevant(volume_id))
    return hits / k


def average_precision(
    ranked: RankedList,
    is_relevant: Relevance,
    total_relevant_in_index: int,
    depth: int | None = None,
) -> float:
    """AP = sum over ranks n of (R_n - R_{n-1}) * P_n, with R_0 = 0.

    R_n is recall against `total_relevant_in_index`. With `depth`, the list is
    cut at that rank and recall is taken against min(total, depth).

    Raises:
        DataValidationError: No relevant item exists
    """
    if total_relevant_in_index < 1:
        raise DataValidationError("average precision is undefined without relevant items")
    ids = ranked.volume_ids()
    denominator = total_relevant_in_index
    if depth is not None:
        ids = ids[:depth]
        denominator = min(total_relevant_in_index, depth)

    ap = 0.0
    relevant_so_far = 0
    previous_recall = 0.0
    for n, volume_id in enumerate(ids, start=1):
        if is_relevant(volume_id):
            relevant_so_far += 1
        recall = relevant_so_far / denominator
        ap += (recall - previous_recall) * (relevant_so_far / n)
        previous_recall = recall
    return ap


def relevance_for(manifest: DatasetManifest, query: VolumeEntry, criterion: RelevanceCriterion) -> Relevance:
    """Predicate judging an indexed volume against the query's ground truth."""
    labels = {entry.volume_id: entry for entry in manifest.volumes}

    def is_relevant(volume_id: str) -> bool:
        result = labels.get(volume_id)
        if result is None:
            return False
        if criterion == "flag":
            return result.lesion_flag == query.lesion_flag
        return result.lesion_group == query.lesion_group

    return is_relevant


def _check_inputs(manifest: DatasetManifest, method: str, tests: list[VolumeEntry]) -> None:
    if method not in RETRIEVAL_METHODS:
        raise DataValidationError(f"unknown method '{method}', expected one of {', '.join(RETRIEVAL_METHODS)}")
    if not tests:
        raise DataValidationError(f"manifest '{manifest.dataset_name}' has no test volumes")
    missing = [e.volume_id for e in tests if not manifest.resolve(e.slice_embeddings_path).exists()]
    if method in ("caption", "ensemble"):
        missing += [
            e.volume_id
            for e in tests
            if e.caption_embedding_path is None or not manifest.resolve(e.caption_embedding_path).exists()
        ]
    if missing:
        raise DataValidationError(f"test volumes missing embeddings: {', '.join(sorted(set(missing)))}")


def run_experiment(
    engine: "RetrievalEngine",
    method: str,
    criterion: RelevanceCriterion,
    k_list: list[int] | None = None,
    ap_depth: int | None = None,
    threads: int | None = None,
) -> MetricReport:
    """Rank every train volume for every test query and macro-average P@k and AP.

    Raises:
        DataValidationError: Unknown method, split leakage or missing test embeddings
    """
    manifest = engine.manifest
    k_list = settings.k_list if k_list is None else k_list
    ap_depth = ap_depth if ap_depth is not None else settings.ap_depth
    tests = sorted(manifest.entries("test"), key=lambda e: e.volume_id)
    _check_inputs(manifest, method, tests)
    engine.check_no_leakage()
    indexed = engine.indexed_volume_ids()

    def evaluate(query: VolumeEntry) -> QueryMetrics:
        ranked = engine.rank(method, query)
        is_relevant = relevance_for(manifest, query, criterion)
        total_relevant = sum(1 for volume_id in indexed if is_relevant(volume_id))
        p_at = {k: precision_at_k(ranked, is_relevant, k) for k in k_list}
        if total_relevant == 0:
            logger.warning("query %s has no relevant volume in the index; AP set to 0", query.volume_id)
            ap = 0.0
        else:
            ap = average_precision(ranked, is_relevant, total_relevant, depth=ap_depth)
        return QueryMetrics(query_id=query.volume_id, p_at=p_at, ap=ap)

    threads = settings.threads if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            per_query = list(executor.map(evaluate, tests))
    else:
        per_query = [evaluate(query) for query in tests]

    report = MetricReport.from_queries(method, criterion, k_list, per_query)
    logger.info("%s/%s over %d queries: %s", method, criterion, report.num_queries, report.macro)
    return report


def lesion_size_histogram(records: list[LesionRecord], bin_width_cm: float) -> dict[str, dict[int, int]]:
    """Per-organ counts of the largest lesion length per (volume, organ).

    Bins are [i*w, (i+1)*w) starting at 0.

    Raises:
        DataValidationError: Non-positive bin width
    """
    if bin_width_cm <= 0:
        raise DataValidationError(f"bin width must be positive, got {bin_width_cm}")
    largest: dict[tuple[str, str], float] = {}
    for record in records:
        key = (record.volume_id, record.organ)
        largest[key] = max(largest.get(key, 0.0), record.length_cm)

    histogram: dict[str, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for (_, organ), length in sorted(largest.items()):
        # Guard against 0.3 / 0.1 = 2.999...
        histogram[organ][math.floor(length / bin_width_cm + 1e-9)] += 1
    return {organ: dict(sorted(bins.items())) for organ, bins in sorted(histogram.items())}
