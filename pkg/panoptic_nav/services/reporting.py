"""
Dataset evaluation and report rendering.

The text table keeps the column order of the published evaluation table:
typical-class IoUs, AP^d, AP^i, PQ_th, mIoU, PQ_st, PQ (all in percent).
"""

import json
from typing import Dict, Optional, Sequence

import numpy as np

from panoptic_nav.models.frame import Frame
from panoptic_nav.models.panoptic import FusionConfig, PanopticMap, SemanticMap
from panoptic_nav.models.reports import ApReport, EvalReport, PqReport, SemReport
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.fusion import fuse_frame
from panoptic_nav.services.metrics import (
    average_precision, confusion_matrix, instances_from_panoptic, match_segments,
    merge_matches, pq_scores, sem_report_from_confusion
)
from panoptic_nav.services.resample import (
    ResampleMethod, resample_instance, resample_panoptic, resample_semantic
)
from panoptic_nav.utils.exceptions import MetricInputException, MissingPlaneException
from panoptic_nav.utils.logger import get_logger, log_event

logger = get_logger(__name__)

TYPICAL_CLASSES = ("pole", "traffic-light", "person", "rider", "bike", "car")
AGGREGATE_COLUMNS = ("AP^d", "AP^i", "PQ_th", "mIoU", "PQ_st", "PQ")


def build_eval_report(resolution: str,
                      schema: LabelSchema,
                      pq: Optional[PqReport] = None,
                      sem: Optional[SemReport] = None,
                      ap_d: Optional[ApReport] = None,
                      ap_i: Optional[ApReport] = None,
                      typical_classes: Sequence[str] = TYPICAL_CLASSES) -> EvalReport:
    """Combine PQ, mIoU and AP results into one evaluation-table row."""
    class_iou: Dict[str, Optional[float]] = {}
    for name in typical_classes:
        try:
            class_id = schema.id_of(name)
        except KeyError:
            class_iou[name] = None
            continue
        class_iou[name] = sem.per_class_iou.get(class_id) if sem is not None else None

    return EvalReport(
        resolution=resolution,
        class_iou=class_iou,
        ap_d=ap_d.ap if ap_d is not None else None,
        ap_i=ap_i.ap if ap_i is not None else None,
        pq_th=pq.pq_th if pq is not None else None,
        miou=sem.miou if sem is not None else None,
        pq_st=pq.pq_st if pq is not None else None,
        pq=pq.pq if pq is not None else None,
        pq_detail=pq,
        class_names={c.id: c.name for c in schema.classes},
    )


def evaluate_frames(pred_frames: Sequence[Frame],
                    gt_frames: Sequence[Frame],
                    schema: LabelSchema,
                    thresholds: Sequence[float],
                    resample: ResampleMethod = "nearest",
                    fusion: Optional[FusionConfig] = None,
                    typical_classes: Sequence[str] = TYPICAL_CLASSES) -> EvalReport:
    """
    Evaluate predicted frames against ground-truth frames paired by frame_id.

    Predictions are resampled to the ground-truth size. A prediction without a
    panoptic plane is fused from its semantic and instance planes. AP columns are
    only filled when every prediction frame carries instances.

    Raises:
        MetricInputException: frame ids of the two sequences differ
        MissingPlaneException: a ground-truth frame has no panoptic plane
    """
    preds_by_id = {f.frame_id: f for f in pred_frames}
    gt_ids = [f.frame_id for f in gt_frames]
    if sorted(preds_by_id) != sorted(gt_ids):
        missing = sorted(set(gt_ids) ^ set(preds_by_id))
        raise MetricInputException(f"Prediction and ground-truth frame ids differ: {missing[:10]}")
    if not gt_frames:
        raise MetricInputException("No frames to evaluate")

    matches = []
    confusion: Optional[np.ndarray] = None
    with_instances = all(f.instances is not None for f in pred_frames)
    ap_preds, ap_gts = [], []

    for gt in gt_frames:
        if gt.panoptic is None:
            raise MissingPlaneException(gt.frame_id, "panoptic")
        pred = preds_by_id[gt.frame_id]
        native = _prediction_panoptic(pred, schema, fusion)
        pred_panoptic = resample_panoptic(native, gt.height, gt.width, resample)
        matches.append(match_segments(pred_panoptic, gt.panoptic, schema))

        gt_semantic = gt.semantic or SemanticMap.from_array(gt.panoptic.class_ids)
        pred_semantic = pred.semantic or SemanticMap.from_array(native.class_ids)
        pred_semantic = resample_semantic(pred_semantic, gt.height, gt.width, resample)
        frame_confusion = confusion_matrix(pred_semantic, gt_semantic, schema)
        confusion = frame_confusion if confusion is None else confusion + frame_confusion

        if with_instances:
            ap_preds.append([resample_instance(i, gt.height, gt.width, resample) for i in pred.instances])
            ap_gts.append(instances_from_panoptic(gt.panoptic))

    pq = pq_scores(merge_matches(matches))
    sem = sem_report_from_confusion(confusion, schema)
    ap_d = ap_i = None
    if with_instances:
        ap_d = average_precision(ap_preds, ap_gts, schema, "box", thresholds)
        ap_i = average_precision(ap_preds, ap_gts, schema, "mask", thresholds)
    else:
        logger.info("Prediction frames carry no instance planes; AP columns left empty")

    resolution = f"{gt_frames[0].height}x{gt_frames[0].width}"
    report = build_eval_report(resolution, schema, pq, sem, ap_d, ap_i, typical_classes)
    log_event("metrics", "info", f"Evaluated {len(gt_frames)} frames at {resolution}",
              {"pq": report.pq, "miou": report.miou})
    return report


def format_eval_table(reports: Sequence[EvalReport], detail: bool = True) -> str:
    """Aligned text table, one row per report; values in percent with one decimal."""
    if not reports:
        return ""
    class_columns = list(reports[0].class_iou)
    header = ["Resolution"] + class_columns + list(AGGREGATE_COLUMNS)
    rows = [header]
    for report in reports:
        values = [report.class_iou.get(name) for name in class_columns]
        values += [report.ap_d, report.ap_i, report.pq_th, report.miou, report.pq_st, report.pq]
        rows.append([report.resolution] + [_percent(v) for v in values])

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i]) for i, cell in enumerate(row))
        for row in rows
    ]
    text = "\n".join(lines) + "\n"

    if detail:
        for report in reports:
            if report.pq_detail is not None and report.pq_detail.per_class:
                text += "\n" + format_pq_detail(report)
    return text


def format_pq_detail(report: EvalReport) -> str:
    """Per-class PQ/SQ/RQ block with four decimals."""
    pq = report.pq_detail
    lines = [f"Per-class panoptic quality ({report.resolution})",
             f"{'class':<24}{'kind':>6}{'PQ':>8}{'SQ':>8}{'RQ':>8}{'TP':>6}{'FP':>6}{'FN':>6}"]
    for class_id, scores in pq.per_class.items():
        name = report.class_names.get(class_id, str(class_id))
        kind = "thing" if scores.is_thing else "stuff"
        lines.append(
            f"{name:<24}{kind:>6}{scores.pq:>8.4f}{scores.sq:>8.4f}{scores.rq:>8.4f}"
            f"{scores.tp:>6}{scores.fp:>6}{scores.fn:>6}"
        )
    lines.append(f"{'all':<24}{'':>6}{pq.pq:>8.4f}{pq.sq:>8.4f}{pq.rq:>8.4f}")
    return "\n".join(lines) + "\n"


def eval_report_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps({"reports": [r.model_dump(mode="json") for r in reports]}, indent=2)


def _prediction_panoptic(frame: Frame, schema: LabelSchema, fusion: Optional[FusionConfig]) -> PanopticMap:
    if frame.panoptic is not None:
        return frame.panoptic
    if frame.semantic is None or frame.instances is None:
        raise MissingPlaneException(frame.frame_id, "panoptic")
    return fuse_frame(frame.semantic, frame.instances, schema,
                      fusion or FusionConfig.for_frame(frame.width, frame.height))


def _percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{value * 100:.1f}"
