"""
Merge ranked instance predictions with a semantic map into one panoptic map.

Base heuristic: confident instances claim pixels in rank order, heavily
occluded or tiny instances are dropped, and unclaimed pixels fall back to the
semantic stuff class when that class keeps enough area, void otherwise.
"""

from typing import List, Optional, Sequence

import numpy as np

from panoptic_nav.models.panoptic import (
    FusionConfig, InstancePrediction, PanopticMap, SemanticMap, index_segments
)
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.mask_codec import encoded_mask_bytes
from panoptic_nav.utils.exceptions import DimensionMismatchException, FusionInputException
from panoptic_nav.utils.logger import get_logger

logger = get_logger(__name__)


def rank_instances(instances: Sequence[InstancePrediction], threshold: float) -> List[InstancePrediction]:
    """Confident instances in (confidence desc, class asc, encoded mask asc) order."""
    kept = [inst for inst in instances if inst.confidence >= threshold]
    # mask bytes only break (confidence, class) ties, so encode lazily
    cache = {}

    def mask_key(index: int) -> bytes:
        if index not in cache:
            cache[index] = encoded_mask_bytes(kept[index].mask)
        return cache[index]

    order = list(range(len(kept)))
    order.sort(key=lambda i: (-kept[i].confidence, kept[i].class_id))
    ranked: List[int] = []
    start = 0
    while start < len(order):
        end = start + 1
        head = kept[order[start]]
        while end < len(order) and (kept[order[end]].confidence, kept[order[end]].class_id) == (
            head.confidence, head.class_id
        ):
            end += 1
        group = order[start:end]
        if len(group) > 1:
            group.sort(key=mask_key)
        ranked.extend(group)
        start = end
    return [kept[i] for i in ranked]


def fuse_frame(semantic: SemanticMap,
               instances: Sequence[InstancePrediction],
               schema: LabelSchema,
               cfg: Optional[FusionConfig] = None) -> PanopticMap:
    """
    Fuse one frame's predictions into a panoptic map.

    Args:
        semantic: Per-pixel class ids
        instances: Thing proposals with confidences and masks
        schema: Active label schema
        cfg: Fusion parameters; defaults scale the stuff-area limit to the frame

    Returns:
        PanopticMap with instance ids 1..N assigned in rank order

    Raises:
        DimensionMismatchException: a mask differs in size from the semantic map
        FusionInputException: an instance names a stuff or unknown class
    """
    cfg = cfg or FusionConfig.for_frame(semantic.width, semantic.height)
    shape = (semantic.height, semantic.width)
    for index, inst in enumerate(instances):
        if inst.mask.bits.shape != shape:
            raise DimensionMismatchException(f"instance {index} mask", shape, inst.mask.bits.shape)
        if inst.class_id not in schema:
            raise FusionInputException(f"Instance {index} has unknown class id {inst.class_id}")
        if not schema.is_thing(inst.class_id):
            raise FusionInputException(
                f"Instance {index} references stuff class '{schema.name_of(inst.class_id)}'"
            )

    class_ids = np.full(shape, schema.void_id, dtype=np.int32)
    instance_ids = np.zeros(shape, dtype=np.int32)
    claimed = np.zeros(shape, dtype=bool)

    next_id = 1
    discarded = 0
    for inst in rank_instances(instances, cfg.confidence_threshold):
        fresh = inst.mask.bits & ~claimed
        remaining = int(np.count_nonzero(fresh))
        if (remaining == 0
                or remaining / inst.mask.area < cfg.overlap_keep_fraction
                or remaining < cfg.min_instance_area):
            discarded += 1
            continue
        np.copyto(class_ids, inst.class_id, where=fresh)
        np.copyto(instance_ids, next_id, where=fresh)
        claimed |= fresh
        next_id += 1

    _fill_stuff(semantic.ids, claimed, class_ids, schema, cfg.min_stuff_area)

    if discarded:
        logger.debug(f"Fusion kept {next_id - 1} instances, discarded {discarded}")
    return PanopticMap.from_planes(class_ids, instance_ids)


def _fill_stuff(semantic_ids: np.ndarray,
                claimed: np.ndarray,
                class_ids: np.ndarray,
                schema: LabelSchema,
                min_stuff_area: int) -> None:
    unclaimed = ~claimed
    free_ids = semantic_ids[unclaimed]
    if free_ids.size == 0:
        return
    stuff = np.asarray(schema.stuff_ids, dtype=np.int64)
    if stuff.size == 0:
        return
    values, areas = np.unique(free_ids, return_counts=True)
    keep = np.isin(values, stuff) & (areas >= min_stuff_area)
    kept_values = values[keep]
    if kept_values.size == 0:
        return
    # thing ids and small stuff stay void
    target = np.where(np.isin(free_ids, kept_values), free_ids, schema.void_id).astype(np.int32)
    class_ids[unclaimed] = target


def verify_panoptic(panoptic: PanopticMap, schema: LabelSchema) -> List[str]:
    """Invariant scan; returns human-readable violations (empty when the map is valid)."""
    problems: List[str] = []
    known = np.isin(panoptic.class_ids, np.asarray(schema.ids))
    if not known.all():
        row, col = np.argwhere(~known)[0]
        problems.append(f"unknown class {int(panoptic.class_ids[row, col])} at ({int(row)}, {int(col)})")

    thing_lookup = np.isin(panoptic.class_ids, np.asarray(schema.thing_ids))
    with_instance = panoptic.instance_ids > 0
    if (thing_lookup & ~with_instance).any():
        problems.append("thing pixel without an instance id")
    if (~thing_lookup & with_instance).any():
        problems.append("stuff or void pixel carries an instance id")

    flat_inst = panoptic.instance_ids.ravel()
    flat_cls = panoptic.class_ids.ravel()
    if (flat_inst > 0).any():
        pairs = np.unique(np.stack([flat_inst, flat_cls])[:, flat_inst > 0], axis=1)
        if pairs.shape[1] != np.unique(pairs[0]).size:
            problems.append("an instance id spans more than one class")

    if index_segments(panoptic.class_ids, panoptic.instance_ids) != list(panoptic.segments):
        problems.append("segment index disagrees with the pixel grid")
    return problems


def relabel_canonical(panoptic: PanopticMap) -> PanopticMap:
    """Renumber instance ids 1..N in order of first appearance in raster order."""
    flat = panoptic.instance_ids.ravel()
    ids, first = np.unique(flat, return_index=True)
    present = ids > 0
    ids, first = ids[present], first[present]
    if ids.size == 0:
        return panoptic
    ordered = ids[np.argsort(first, kind="stable")]
    lookup = np.zeros(int(ids.max()) + 1, dtype=np.int32)
    lookup[ordered] = np.arange(1, ordered.size + 1, dtype=np.int32)
    return PanopticMap.from_planes(panoptic.class_ids, lookup[panoptic.instance_ids])

