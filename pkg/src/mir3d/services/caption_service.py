"""Caption templates, caption-embedding queries and rank interleaving."""

import logging

from numpy.typing import ArrayLike

from ..config import settings
from ..errors import DataValidationError
from ..models.evaluation import EnsembleConfig
from ..models.lesion import CaptionRecord, LesionRecord
from ..models.retrieval import PooledSlice, RankedList, SlicePool
from .index_service import VectorIndex
from .slice_retrieval_service import parent_of, rank_volumes, score_freq

logger = logging.getLogger(__name__)

NORMAL_TEMPLATE = "A normal image of the {organ} with no tumors present."
LESION_TEMPLATE = (
    "3D volume image showcasing a {organ} with {n} tumors, "
    "the largest of which measures {length:.2f} centimeters in length"
)

CAPTION_QUERY_ID = "<caption>"


def generate_caption(organ: str, num_lesions: int, largest_length_cm: float | None = None) -> str:
    """Deterministic caption text.

    Raises:
        DataValidationError: Negative count, or lesions without a length
    """
    if num_lesions < 0:
        raise DataValidationError(f"num_lesions must be non-negative, got {num_lesions}")
    if num_lesions == 0:
        return NORMAL_TEMPLATE.format(organ=organ)
    if largest_length_cm is None:
        raise DataValidationError("largest_length_cm is required when lesions are present")
    return LESION_TEMPLATE.format(organ=organ, n=num_lesions, length=largest_length_cm)


def caption_record(volume_id: str, organ: str, lesions: list[LesionRecord]) -> CaptionRecord:
    """Caption of one volume from the lesions attributed to `organ`."""
    in_organ = [record for record in lesions if record.organ == organ]
    largest = round(max(r.length_cm for r in in_organ), 2) if in_organ else None
    return CaptionRecord(
        volume_id=volume_id,
        organ=organ,
        num_lesions=len(in_organ),
        largest_length_cm=largest,
        text=generate_caption(organ, len(in_organ), largest),
    )


def caption_query(
    caption_embedding: ArrayLike,
    slice_index: VectorIndex,
    n: int | None = None,
    k: int | None = None,
) -> RankedList:
    """Top-n slices for one text embedding, aggregated to volumes by frequency.

    `k=None` keeps every volume that received a slice.

    Raises:
        DataValidationError: n or k below 1
    """
    n = settings.caption_n if n is None else n
    if n < 1:
        raise DataValidationError(f"caption n must be positive, got {n}")
    if k is not None and k < 1:
        raise DataValidationError(f"k must be positive, got {k}")
    hits = slice_index.search(caption_embedding, n)
    if not hits:
        return RankedList(method="caption")
    pool = SlicePool(
        query_volume_id=CAPTION_QUERY_ID,
        n_per_slice=n,
        num_query_slices=1,
        retrieved=[PooledSlice(slice_key=h.key, parent_volume_id=parent_of(h.key), distance=h.distance) for h in hits],
    )
    scores = score_freq(pool)
    return rank_volumes(scores, len(scores) if k is None else k, method="caption")


def ensemble_interleave(
    caption_list: RankedList,
    slice_list: RankedList,
    config: EnsembleConfig,
) -> RankedList:
    """Alternate ranks of the two lists, skipping volumes already taken.

    Scores are 1/rank since the two methods' scores are not comparable.
    """
    first, second = (caption_list, slice_list) if config.first == "caption" else (slice_list, caption_list)
    queues = [first.volume_ids(), second.volume_ids()]
    positions = [0, 0]
    seen: set[str] = set()
    merged: list[str] = []
    turn = 0

    while len(merged) < config.k:
        exhausted = 0
        for offset in range(2):
            side = (turn + offset) % 2
            queue = queues[side]
            while positions[side] < len(queue) and queue[positions[side]] in seen:
                positions[side] += 1
            if positions[side] < len(queue):
                volume_id = queue[positions[side]]
                positions[side] += 1
                seen.add(volume_id)
                merged.append(volume_id)
                break
            exhausted += 1
        if exhausted == 2:
            break
        turn = (turn + 1) % 2

    return RankedList.from_pairs("ensemble", [(v, 1.0 / rank) for rank, v in enumerate(merged, start=1)])
