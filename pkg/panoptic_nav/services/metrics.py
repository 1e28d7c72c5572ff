"""
Evaluation metrics: panoptic quality, semantic mIoU and average precision.

Segment matching follows the standard panoptic-quality definition: a predicted
and a ground-truth segment of the same class match iff their IoU is strictly
greater than 0.5, ground-truth void pixels are ignored in the union, and
predictions lying mostly on void are not counted as false positives.
"""

from collections import defaultdict
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from panoptic_nav.models.masks import BitMask, Box
from panoptic_nav.models.panoptic import GroundTruthInstance, InstancePrediction, PanopticMap, SemanticMap
from panoptic_nav.models.reports import (
    ApReport, ClassMatch, ClassPq, MatchResult, PqReport, SegmentKey, SemReport, TruePositive
)
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.mask_codec import bbox_of_mask, box_iou, encoded_mask_bytes
from panoptic_nav.utils.exceptions import DimensionMismatchException, MetricInputException
from panoptic_nav.utils.logger import get_logger

logger = get_logger(__name__)

MATCH_IOU = 0.5
VOID_FP_FRACTION = 0.5
RECALL_LEVELS = np.linspace(0.0, 1.0, 101)


def match_segments(pred: PanopticMap, gt: PanopticMap, schema: LabelSchema) -> MatchResult:
    """
    Match predicted and ground-truth segments of one frame.

    Stuff classes form one segment each (instance 0); void is never a segment.
    """
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatchException("panoptic map", (gt.height, gt.width), (pred.height, pred.width))

    void = schema.void_id
    pred_vals, pred_inv, pred_areas = np.unique(pred.packed().ravel(), return_inverse=True, return_counts=True)
    gt_vals, gt_inv, gt_areas = np.unique(gt.packed().ravel(), return_inverse=True, return_counts=True)
    pred_inv = pred_inv.ravel()
    gt_inv = gt_inv.ravel()

    n_gt = gt_vals.shape[0]
    pair_counts = np.bincount(pred_inv * n_gt + gt_inv, minlength=pred_vals.shape[0] * n_gt)
    overlap = pair_counts.reshape(pred_vals.shape[0], n_gt)

    pred_keys = [_unpack(v) for v in pred_vals]
    gt_keys = [_unpack(v) for v in gt_vals]
    gt_void = [j for j, key in enumerate(gt_keys) if key[0] == void]
    void_overlap = overlap[:, gt_void].sum(axis=1) if gt_void else np.zeros(len(pred_keys), dtype=np.int64)

    matched_pred = set()
    matched_gt = set()
    per_class: Dict[int, ClassMatch] = {}
    tps: Dict[int, List[TruePositive]] = defaultdict(list)

    for i, j in zip(*np.nonzero(overlap)):
        p_key, g_key = pred_keys[i], gt_keys[j]
        if p_key[0] == void or g_key[0] == void or p_key[0] != g_key[0]:
            continue
        inter = int(overlap[i, j])
        union = int(pred_areas[i]) + int(gt_areas[j]) - inter - int(void_overlap[i])
        iou = inter / union
        if iou > MATCH_IOU:
            tps[g_key[0]].append(TruePositive(pred=p_key, gt=g_key, iou=iou))
            matched_pred.add(i)
            matched_gt.add(j)

    fns: Dict[int, List[SegmentKey]] = defaultdict(list)
    for j, key in enumerate(gt_keys):
        if key[0] != void and j not in matched_gt:
            fns[key[0]].append(key)

    fps: Dict[int, List[SegmentKey]] = defaultdict(list)
    for i, key in enumerate(pred_keys):
        if key[0] == void or i in matched_pred:
            continue
        if void_overlap[i] / pred_areas[i] > VOID_FP_FRACTION:
            continue
        fps[key[0]].append(key)

    for class_id in sorted(set(tps) | set(fps) | set(fns)):
        per_class[class_id] = ClassMatch(
            tp=sorted(tps[class_id], key=lambda t: t.gt),
            fp=sorted(fps[class_id]),
            fn=sorted(fns[class_id]),
        )
    return MatchResult(per_class=per_class, thing_ids=schema.thing_ids)


def merge_matches(results: Sequence[MatchResult]) -> MatchResult:
    """Pool per-class TP/FP/FN over frames for dataset-level PQ."""
    pooled: Dict[int, Dict[str, list]] = defaultdict(lambda: {"tp": [], "fp": [], "fn": []})
    thing_ids: set = set()
    for result in results:
        thing_ids.update(result.thing_ids)
        for class_id, match in result.per_class.items():
            pooled[class_id]["tp"].extend(match.tp)
            pooled[class_id]["fp"].extend(match.fp)
            pooled[class_id]["fn"].extend(match.fn)
    return MatchResult(
        per_class={c: ClassMatch(**pooled[c]) for c in sorted(pooled)},
        thing_ids=sorted(thing_ids),
    )


def pq_scores(match: MatchResult) -> PqReport:
    """PQ = SQ x RQ per class, averaged over included classes and over the thing/stuff splits."""
    things = set(match.thing_ids)
    per_class: Dict[int, ClassPq] = {}
    for class_id in sorted(match.per_class):
        m = match.per_class[class_id]
        tp, fp, fn = len(m.tp), len(m.fp), len(m.fn)
        if tp + fp + fn == 0:
            continue
        sq = min(1.0, sum(t.iou for t in m.tp) / tp) if tp else 0.0
        rq = tp / (tp + 0.5 * fp + 0.5 * fn)
        per_class[class_id] = ClassPq(
            pq=sq * rq, sq=sq, rq=rq, tp=tp, fp=fp, fn=fn, is_thing=class_id in things
        )

    def mean(values: List[float]) -> float:
        return float(sum(values) / len(values)) if values else 0.0

    thing_scores = [c.pq for c in per_class.values() if c.is_thing]
    stuff_scores = [c.pq for c in per_class.values() if not c.is_thing]
    return PqReport(
        per_class=per_class,
        pq=mean([c.pq for c in per_class.values()]),
        pq_th=mean(thing_scores),
        pq_st=mean(stuff_scores),
        sq=mean([c.sq for c in per_class.values()]),
        rq=mean([c.rq for c in per_class.values()]),
        n=len(per_class),
        n_th=len(thing_scores),
        n_st=len(stuff_scores),
    )


def confusion_matrix(pred: SemanticMap, gt: SemanticMap, schema: LabelSchema) -> np.ndarray:
    """Rows are gt classes, columns predicted classes, in sorted schema id order; gt-void pixels dropped."""
    if pred.ids.shape != gt.ids.shape:
        raise DimensionMismatchException("semantic map", gt.ids.shape, pred.ids.shape)
    class_ids = np.asarray(sorted(schema.ids))
    for name, plane in (("prediction", pred.ids), ("ground truth", gt.ids)):
        if not np.isin(plane, class_ids).all():
            raise MetricInputException(f"{name} holds class ids outside the schema")

    keep = gt.ids.ravel() != schema.void_id
    gt_idx = np.searchsorted(class_ids, gt.ids.ravel()[keep])
    pred_idx = np.searchsorted(class_ids, pred.ids.ravel()[keep])
    k = class_ids.shape[0]
    return np.bincount(gt_idx * k + pred_idx, minlength=k * k).reshape(k, k)


def miou(pred: SemanticMap, gt: SemanticMap, schema: LabelSchema) -> SemReport:
    """Per-class IoU from the confusion matrix; classes with an empty denominator are excluded from the mean."""
    return sem_report_from_confusion(confusion_matrix(pred, gt, schema), schema)


def sem_report_from_confusion(confusion: np.ndarray, schema: LabelSchema) -> SemReport:
    """SemReport of a (possibly accumulated) confusion matrix in sorted schema id order."""
    class_ids = sorted(schema.ids)
    tp = np.diag(confusion)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp

    per_class_iou: Dict[int, Optional[float]] = {}
    defined: List[float] = []
    for index, class_id in enumerate(class_ids):
        if class_id == schema.void_id:
            continue
        denominator = int(tp[index] + fp[index] + fn[index])
        if denominator == 0:
            per_class_iou[class_id] = None
            continue
        iou = int(tp[index]) / denominator
        per_class_iou[class_id] = iou
        defined.append(iou)

    return SemReport(
        class_ids=class_ids,
        confusion=confusion,
        per_class_iou=per_class_iou,
        miou=float(sum(defined) / len(defined)) if defined else 0.0,
    )


def instances_from_panoptic(panoptic: PanopticMap) -> List[GroundTruthInstance]:
    """Ground-truth thing instances (mask and tight box) of a panoptic map."""
    instances: List[GroundTruthInstance] = []
    for segment in panoptic.segments:
        mask = BitMask(
            width=panoptic.width, height=panoptic.height, bits=panoptic.instance_ids == segment.instance_id
        )
        instances.append(GroundTruthInstance(class_id=segment.class_id, mask=mask, box=bbox_of_mask(mask)))
    return instances


def average_precision(preds: Sequence[Sequence[InstancePrediction]],
                      gts: Sequence[Sequence[GroundTruthInstance]],
                      schema: LabelSchema,
                      iou_kind: Literal["box", "mask"],
                      thresholds: Sequence[float]) -> ApReport:
    """
    COCO-style average precision over images.

    Args:
        preds: Predictions per image
        gts: Ground-truth instances per image (same image order)
        schema: Active label schema; only thing classes with ground truth are scored
        iou_kind: 'box' for detection AP, 'mask' for instance segmentation AP
        thresholds: IoU thresholds in (0, 1)

    Returns:
        ApReport with per-class/per-threshold values and their means

    Raises:
        MetricInputException: empty or out-of-range thresholds, or mismatched image lists
    """
    if not thresholds:
        raise MetricInputException("Average precision needs at least one IoU threshold")
    if any(not (0.0 < t < 1.0) for t in thresholds):
        raise MetricInputException(f"IoU thresholds must lie in (0, 1), got {list(thresholds)}")
    if len(preds) != len(gts):
        raise MetricInputException(f"{len(preds)} prediction images but {len(gts)} ground-truth images")
    if iou_kind not in ("box", "mask"):
        raise MetricInputException(f"Unknown IoU kind '{iou_kind}'")

    thresholds = [float(t) for t in thresholds]
    per_class: Dict[int, Dict[float, float]] = {}
    for class_id in schema.thing_ids:
        class_gts = [[g for g in image if g.class_id == class_id] for image in gts]
        total_gt = sum(len(image) for image in class_gts)
        if total_gt == 0:
            continue
        class_preds = [[p for p in image if p.class_id == class_id] for image in preds]
        ranked = _rank_predictions(class_preds)
        ious = [_iou_matrix(class_preds[i], class_gts[i], iou_kind) for i in range(len(preds))]
        per_class[class_id] = {
            t: _class_ap(ranked, ious, [len(image) for image in class_gts], total_gt, t) for t in thresholds
        }

    if not per_class:
        logger.warning("No ground-truth instances of any thing class; average precision is 0")

    per_class_mean = {c: float(np.mean(list(v.values()))) for c, v in per_class.items()}
    per_threshold = {
        t: float(np.mean([v[t] for v in per_class.values()])) if per_class else 0.0 for t in thresholds
    }
    return ApReport(
        iou_kind=iou_kind,
        thresholds=thresholds,
        per_class=per_class,
        per_class_mean=per_class_mean,
        per_threshold=per_threshold,
        ap=float(np.mean(list(per_class_mean.values()))) if per_class_mean else 0.0,
    )


def interpolated_ap(tp_flags: Sequence[bool], total_gt: int) -> float:
    """Mean interpolated precision at 101 recall levels for a ranked TP/FP sequence."""
    if total_gt <= 0 or len(tp_flags) == 0:
        return 0.0
    flags = np.asarray(tp_flags, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / total_gt
    precision = tp / (tp + fp)
    # monotone envelope from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    index = np.searchsorted(recall, RECALL_LEVELS, side="left")
    sampled = np.where(index < precision.shape[0], precision[np.minimum(index, precision.shape[0] - 1)], 0.0)
    return float(sampled.mean())


def _class_ap(ranked: List[Tuple[int, int]],
              ious: List[np.ndarray],
              gt_counts: List[int],
              total_gt: int,
              threshold: float) -> float:
    used = [np.zeros(n, dtype=bool) for n in gt_counts]
    flags: List[bool] = []
    for image, index in ranked:
        row = ious[image][index] if gt_counts[image] else np.zeros(0)
        candidates = np.where(used[image] | (row < threshold), -1.0, row)
        if candidates.size and candidates.max() >= 0.0:
            best = int(np.argmax(candidates))
            used[image][best] = True
            flags.append(True)
        else:
            flags.append(False)
    return interpolated_ap(flags, total_gt)


def _rank_predictions(class_preds: List[List[InstancePrediction]]) -> List[Tuple[int, int]]:
    entries = [
        (image, index, pred) for image, preds in enumerate(class_preds) for index, pred in enumerate(preds)
    ]
    entries.sort(key=lambda e: (-e[2].confidence, e[0], encoded_mask_bytes(e[2].mask)))
    return [(image, index) for image, index, _ in entries]


def _iou_matrix(preds: List[InstancePrediction], gts: List[GroundTruthInstance], iou_kind: str) -> np.ndarray:
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    if iou_kind == "box":
        pred_boxes = [_box_of(p.box, p.mask) for p in preds]
        gt_boxes = [_box_of(g.box, g.mask) for g in gts]
        return np.array([
            [box_iou(p, g) if p is not None and g is not None else 0.0 for g in gt_boxes]
            for p in pred_boxes
        ])
    p = np.stack([pred.mask.bits.ravel() for pred in preds]).astype(np.int64)
    g = np.stack([gt.mask.bits.ravel() for gt in gts]).astype(np.int64)
    inter = p @ g.T
    union = p.sum(axis=1)[:, None] + g.sum(axis=1)[None, :] - inter
    return np.divide(inter, union, out=np.zeros(inter.shape), where=union > 0)


def _box_of(box: Optional[Box], mask: BitMask) -> Optional[Box]:
    return box if box is not None else bbox_of_mask(mask)


def _unpack(packed: int) -> SegmentKey:
    packed = int(packed)
    return (packed >> 16, packed & 0xFFFF)
