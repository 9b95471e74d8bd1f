"""Lesion indexing and morphology from binary label volumes."""

import logging
import math
from typing import Literal, NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from skimage import measure

from ..config import settings
from ..errors import DataValidationError
from ..models.dataset import DatasetManifest, LesionGroup, VolumeEntry
from ..models.lesion import LesionComponent, LesionRecord, SliceMetrics
from ..models.volume import LabelVolume
from .volume_service import load_label_volume

logger = logging.getLogger(__name__)

Connectivity = Literal[6, 26]

UNASSIGNED = "unassigned"
G1_MAX_CM = 2.0
G3_MIN_CM = 5.0
MAX_CIRCULARITY = 1.05
# Widest notch (pixels) of a digitized straight edge traced by marching squares
STAIRCASE_TOLERANCE_PX = 1.0


class VolumeLesions(NamedTuple):
    lesion_flag: bool
    lesion_group: LesionGroup
    records: list[LesionRecord]
    slice_metrics: list[SliceMetrics]


class LesionMorphology(NamedTuple):
    physical_volume_mm3: float
    centroid_mm: tuple[float, float, float]
    ellipsoid_axes_mm: tuple[float, float, float]
    length_cm: float
    elongation: float
    flatness: float


def _structure(connectivity: int) -> NDArray[np.bool_]:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise DataValidationError(f"connectivity must be 6 or 26, got {connectivity}")


def connected_components(mask: LabelVolume, connectivity: Connectivity | None = None) -> list[LesionComponent]:
    """Partition foreground voxels into maximal connected components.

    Components are ordered by (voxel count desc, first voxel in z, y, x scan
    order) and numbered 1..n in that order.

    Raises:
        DataValidationError: Mask is not binary
    """
    connectivity = settings.connectivity if connectivity is None else connectivity
    if not mask.is_binary():
        raise DataValidationError("lesion mask must contain only labels 0 and 1")

    labels, count = ndimage.label(mask.voxels, structure=_structure(connectivity))
    if count == 0:
        return []

    flat = labels.ravel()
    foreground = np.flatnonzero(flat)
    member_labels = flat[foreground]
    # Stable sort keeps each component's voxels in scan order
    order = np.argsort(member_labels, kind="stable")
    foreground = foreground[order]
    sizes = np.bincount(member_labels, minlength=count + 1)[1:]
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    first_voxel = foreground[starts]

    ranking = sorted(range(count), key=lambda i: (-int(sizes[i]), int(first_voxel[i])))
    components: list[LesionComponent] = []
    for lesion_id, i in enumerate(ranking, start=1):
        flat_ids = foreground[starts[i] : starts[i] + sizes[i]]
        z, y, x = np.unravel_index(flat_ids, labels.shape)
        coords = np.stack([x, y, z], axis=1).astype(np.int64)
        components.append(LesionComponent(lesion_id=lesion_id, voxel_coords=coords))
    return components


def lesion_morphology(component: LesionComponent, spacing_mm: tuple[float, float, float]) -> LesionMorphology:
    """Physical volume, centroid and fitted ellipsoid of one component.

    Full axis lengths are 2 * sqrt(5 * lambda) for the eigenvalues of the
    population covariance of voxel-centre coordinates, exact for a uniform
    solid ellipsoid. Eigenvalues are floored at (edge / 2)^2 / 5 with the
    smallest voxel edge, so no axis is shorter than one voxel.

    Raises:
        DataValidationError: Empty component
    """
    if component.voxel_count == 0:
        raise DataValidationError(f"lesion {component.lesion_id} has no voxels")
    spacing = np.asarray(spacing_mm, dtype=np.float64)
    points = component.voxel_coords.astype(np.float64) * spacing

    volume = component.voxel_count * float(np.prod(spacing))
    centroid = points.mean(axis=0)
    centered = points - centroid
    covariance = centered.T @ centered / component.voxel_count
    eigenvalues = np.linalg.eigvalsh(covariance)

    floor = (float(spacing.min()) / 2.0) ** 2 / 5.0
    eigenvalues = np.maximum(eigenvalues, floor)
    a, b, c = sorted((2.0 * math.sqrt(5.0 * lam) for lam in eigenvalues), reverse=True)

    return LesionMorphology(
        physical_volume_mm3=volume,
        centroid_mm=(float(centroid[0]), float(centroid[1]), float(centroid[2])),
        ellipsoid_axes_mm=(a, b, c),
        length_cm=a / 10.0,
        elongation=a / b,
        flatness=b / c,
    )


def map_lesion_to_organ(
    component: LesionComponent,
    organ_masks: list[tuple[str, LabelVolume]],
    reference: LabelVolume | None = None,
) -> tuple[str, float]:
    """Organ with the largest overlap fraction |lesion ∩ organ| / |lesion|.

    Ties go to the alphabetically first organ; no overlap at all yields
    ("unassigned", 0.0).

    Raises:
        DataValidationError: Organ masks and lesion mask do not share a grid
    """
    grids = [mask for _, mask in organ_masks]
    if reference is not None:
        grids.append(reference)
    for mask in grids[1:]:
        if not mask.same_grid(grids[0]):
            raise DataValidationError("organ masks must share dims and spacing with the lesion mask")

    x, y, z = component.voxel_coords.T
    best_name, best_fraction = UNASSIGNED, 0.0
    for name, mask in sorted(organ_masks, key=lambda item: item[0]):
        nx, ny, nz = mask.dims
        if x.size and (x.max() >= nx or y.max() >= ny or z.max() >= nz):
            raise DataValidationError(f"lesion {component.lesion_id} lies outside organ mask '{name}'")
        fraction = float(np.count_nonzero(mask.voxels[z, y, x])) / component.voxel_count
        if fraction > best_fraction:
            best_name, best_fraction = name, fraction
    return best_name, best_fraction


def classify_lengths(lengths_cm: list[float]) -> LesionGroup:
    """Lesion group from lesion lengths.

    G1: a single lesion under 2 cm. G3: the largest lesion over 5 cm.
    Everything else with lesions is G2, including exactly 2 cm and 5 cm.
    """
    if not lengths_cm:
        return "G0"
    largest = max(lengths_cm)
    if largest > G3_MIN_CM:
        return "G3"
    if len(lengths_cm) == 1 and largest < G1_MAX_CM:
        return "G1"
    return "G2"


def classify_lesion_group(lesions: list[LesionRecord]) -> LesionGroup:
    return classify_lengths([record.length_cm for record in lesions])


def _signed_area(points: NDArray[np.float64]) -> float:
    rolled = np.roll(points, -1, axis=0)
    return 0.5 * float(np.sum(points[:, 0] * rolled[:, 1] - rolled[:, 0] * points[:, 1]))


def _within_band(points: NDArray[np.float64], start: int, end: int, tolerance: float) -> bool:
    """True if every vertex strictly between `start` and `end` (cyclic) lies within `tolerance` of their chord."""
    n = len(points)
    a, c = points[start], points[end]
    chord = c - a
    length = float(np.hypot(*chord))
    between = points[[(start + j) % n for j in range(1, (end - start) % n)]]
    if length == 0.0:
        return bool(np.all(np.hypot(*(between - a).T) <= tolerance))
    offsets = between - a
    distances = np.abs(chord[0] * offsets[:, 1] - chord[1] * offsets[:, 0]) / length
    return bool(np.all(distances <= tolerance))


def relax_staircase(contour: NDArray[np.float64], tolerance: float = STAIRCASE_TOLERANCE_PX) -> NDArray[np.float64]:
    """Drop concave contour vertices while the original outline stays within `tolerance` pixels.

    Marching squares on a binary mask traces slanted edges as a staircase of
    notches. Removing shallow concave vertices straightens them; convex
    vertices are never removed, so convex outlines keep their length and a
    real concavity is filled by at most about one pixel.
    """
    closed = len(contour) > 1 and np.allclose(contour[0], contour[-1])
    points = contour[:-1] if closed else contour
    if not closed or len(points) < 4:
        return contour
    area = _signed_area(points)
    if area == 0.0:
        return contour
    orientation = math.copysign(1.0, area)

    kept = list(range(len(points)))
    changed = True
    while changed and len(kept) > 3:
        changed = False
        i = 0
        while i < len(kept) and len(kept) > 3:
            prev, cur, nxt = kept[i - 1], kept[i], kept[(i + 1) % len(kept)]
            d1 = points[cur] - points[prev]
            d2 = points[nxt] - points[cur]
            cross = float(d1[0] * d2[1] - d1[1] * d2[0])
            if cross * orientation < 0 and _within_band(points, prev, nxt, tolerance):
                del kept[i]
                changed = True
            else:
                i += 1
    return points[kept + [kept[0]]]


def _contour_length(contour: NDArray[np.float64], spacing_yx: NDArray[np.float64]) -> float:
    scaled = contour * spacing_yx
    return float(np.sum(np.linalg.norm(np.diff(scaled, axis=0), axis=1)))


def slice_metrics(
    mask: LabelVolume,
    slice_index: int,
    spacing_mm: tuple[float, float, float] | None = None,
    volume_id: str = "",
) -> SliceMetrics:
    """Area, 8-connected lesion count and circularities on one axial slice.

    Circularity is 4*pi*A / P^2 with P the marching-squares contour length
    after staircase relaxation (see `relax_staircase`), clamped to (0, 1.05].

    Raises:
        DataValidationError: Slice index out of range
    """
    nx, ny, nz = mask.dims
    if not 0 <= slice_index < nz:
        raise DataValidationError(f"slice {slice_index} out of range [0, {nz})")
    sx, sy, _ = spacing_mm or mask.spacing_mm
    plane = mask.voxels[slice_index] > 0
    labels, count = ndimage.label(plane, structure=np.ones((3, 3), dtype=bool))

    total_area = 0.0
    circularities: list[float] = []
    spacing_yx = np.array([sy, sx], dtype=np.float64)
    for label in range(1, count + 1):
        region = labels == label
        area = float(np.count_nonzero(region)) * sx * sy
        padded = np.pad(region.astype(np.float64), 1)
        contours = measure.find_contours(padded, 0.5, fully_connected="high")
        perimeter = sum(_contour_length(relax_staircase(c), spacing_yx) for c in contours)
        circularity = 4.0 * math.pi * area / perimeter**2 if perimeter > 0 else MAX_CIRCULARITY
        total_area += area
        circularities.append(min(circularity, MAX_CIRCULARITY))

    return SliceMetrics(
        volume_id=volume_id,
        slice_index=slice_index,
        total_lesion_area_mm2=total_area,
        lesion_count_2d=count,
        circularities=circularities,
    )


def volume_slice_metrics(mask: LabelVolume, volume_id: str) -> list[SliceMetrics]:
    """Slice metrics for every slice containing foreground."""
    occupied = np.flatnonzero(mask.voxels.reshape(mask.voxels.shape[0], -1).any(axis=1))
    return [slice_metrics(mask, int(z), volume_id=volume_id) for z in occupied]


class LesionPipeline:
    """Per-volume lesion extraction over a manifest."""

    def __init__(self, manifest: DatasetManifest, connectivity: Connectivity | None = None) -> None:
        self.manifest = manifest
        self.connectivity: Connectivity = settings.connectivity if connectivity is None else connectivity

    def extract(
        self,
        volume_id: str,
        lesion_mask: LabelVolume,
        organ_masks: list[tuple[str, LabelVolume]],
        default_organ: str,
    ) -> list[LesionRecord]:
        """Lesion records of one volume.

        Without organ masks the volume is taken to be an organ crop and every
        lesion is attributed to `default_organ` with full overlap.
        """
        records: list[LesionRecord] = []
        for component in connected_components(lesion_mask, self.connectivity):
            morph = lesion_morphology(component, lesion_mask.spacing_mm)
            if organ_masks:
                organ, fraction = map_lesion_to_organ(component, organ_masks, reference=lesion_mask)
            else:
                organ, fraction = default_organ, 1.0
            records.append(
                LesionRecord(
                    lesion_id=component.lesion_id,
                    volume_id=volume_id,
                    organ=organ,
                    organ_overlap_fraction=fraction,
                    voxel_count=component.voxel_count,
                    **morph._asdict(),
                )
            )
        logger.debug("volume %s: %d lesions", volume_id, len(records))
        return records

    def load_masks(self, entry: VolumeEntry) -> tuple[LabelVolume, list[tuple[str, LabelVolume]]]:
        if entry.lesion_mask_path is None:
            raise DataValidationError(f"volume '{entry.volume_id}' has no lesion mask")
        lesion_mask = load_label_volume(self.manifest.resolve(entry.lesion_mask_path))
        organ_masks: list[tuple[str, LabelVolume]] = []
        if entry.organ_mask_path is not None:
            organ_masks.append((entry.organ_tag, load_label_volume(self.manifest.resolve(entry.organ_mask_path))))
        return lesion_mask, organ_masks

    def recompute_ground_truth(self, entry: VolumeEntry) -> tuple[bool, LesionGroup, list[LesionRecord]]:
        """(lesion_flag, lesion_group, records) derived from the entry's masks.

        The group is computed from the lesions attributed to the entry's organ.
        """
        lesion_mask, organ_masks = self.load_masks(entry)
        records = self.extract(entry.volume_id, lesion_mask, organ_masks, entry.organ_tag)
        group = classify_lesion_group([r for r in records if r.organ == entry.organ_tag])
        return group != "G0", group, records

    def process(self, entry: VolumeEntry) -> VolumeLesions:
        """Ground truth, lesion records and per-slice metrics of one volume."""
        lesion_mask, organ_masks = self.load_masks(entry)
        records = self.extract(entry.volume_id, lesion_mask, organ_masks, entry.organ_tag)
        group = classify_lesion_group([r for r in records if r.organ == entry.organ_tag])
        return VolumeLesions(
            lesion_flag=group != "G0",
            lesion_group=group,
            records=records,
            slice_metrics=volume_slice_metrics(lesion_mask, entry.volume_id),
        )

    def check_ground_truth(self) -> list[str]:
        """Ids of volumes whose mask-derived labels disagree with the manifest."""
        mismatched: list[str] = []
        for entry in self.manifest.volumes:
            if entry.lesion_mask_path is None:
                continue
            flag, group, _ = self.recompute_ground_truth(entry)
            if (flag, group) != (entry.lesion_flag, entry.lesion_group):
                logger.warning(
                    "volume %s: manifest says (%s, %s), masks give (%s, %s)",
                    entry.volume_id, entry.lesion_flag, entry.lesion_group, flag, group,
                )
                mismatched.append(entry.volume_id)
        return mismatched
