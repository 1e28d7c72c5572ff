"""
Per-segment distance and direction from the depth plane.

Things are reported per instance id and stuff per class (void included, as one
segment), so the reported areas always sum to the frame area.
"""

from typing import List, Sequence

import numpy as np

from panoptic_nav.models.depth import DepthMap, Sector, SegmentInfo
from panoptic_nav.models.panoptic import PANOPTIC_OFFSET, PanopticMap
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.utils.exceptions import DimensionMismatchException

DEPTH_KEY = 65536


def sectorize(centroid_col: float, width: int) -> Sector:
    """Half-open column thirds: [0, W/3) left, [W/3, 2W/3) center, the rest right."""
    if centroid_col * 3 < width:
        return Sector.LEFT
    if centroid_col * 3 < 2 * width:
        return Sector.CENTER
    return Sector.RIGHT


def segment_stats(panoptic: PanopticMap, depth: DepthMap) -> List[SegmentInfo]:
    """
    Describe every segment of a panoptic map, ordered by (class_id, instance_id).

    Distance is the median of the segment's nonzero depths (lower middle value
    for even counts); it is undefined when no depth sample is valid.
    """
    if (panoptic.height, panoptic.width) != (depth.height, depth.width):
        raise DimensionMismatchException(
            "depth plane", (panoptic.height, panoptic.width), (depth.height, depth.width)
        )

    keys, inverse, areas = np.unique(panoptic.packed().ravel(), return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    n = keys.shape[0]
    rows, cols = np.indices((panoptic.height, panoptic.width))
    row_sum = np.bincount(inverse, weights=rows.ravel(), minlength=n)
    col_sum = np.bincount(inverse, weights=cols.ravel(), minlength=n)

    depths = depth.depths.ravel().astype(np.int64)
    valid = depths > 0
    valid_counts = np.bincount(inverse[valid], minlength=n)
    # one sort yields every segment's valid depths in ascending order
    ordered = np.sort(inverse[valid].astype(np.int64) * DEPTH_KEY + depths[valid])
    starts = np.concatenate(([0], np.cumsum(valid_counts)[:-1]))

    segments: List[SegmentInfo] = []
    for index in range(n):
        key = int(keys[index])
        area = int(areas[index])
        count = int(valid_counts[index])
        distance = None
        if count:
            distance = int(ordered[starts[index] + (count - 1) // 2] % DEPTH_KEY)
        centroid = (float(row_sum[index] / area), float(col_sum[index] / area))
        segments.append(SegmentInfo(
            instance_id=key % PANOPTIC_OFFSET,
            class_id=key // PANOPTIC_OFFSET,
            area=area,
            centroid=centroid,
            distance_mm=distance,
            valid_depth_fraction=count / area,
            sector=sectorize(centroid[1], panoptic.width),
        ))
    return segments


def nearest_things(segments: Sequence[SegmentInfo], schema: LabelSchema) -> List[SegmentInfo]:
    """Thing segments nearest first (ties: larger area, then lower instance id); undefined distances last."""
    things = [s for s in segments if schema.is_thing(s.class_id)]
    ranged = sorted(
        (s for s in things if s.distance_mm is not None),
        key=lambda s: (s.distance_mm, -s.area, s.instance_id),
    )
    unranged = sorted((s for s in things if s.distance_mm is None), key=lambda s: s.instance_id)
    return ranged + unranged
