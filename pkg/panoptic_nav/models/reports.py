from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from panoptic_nav.models.base import ArrayModel

# (class_id, instance_id) of a segment; stuff segments use instance 0
SegmentKey = Tuple[int, int]


class TruePositive(BaseModel):
    model_config = ConfigDict(frozen=True)

    pred: SegmentKey
    gt: SegmentKey
    iou: float = Field(..., gt=0.5, le=1.0)


class ClassMatch(BaseModel):
    """Matching outcome for one class."""

    model_config = ConfigDict(frozen=True)

    tp: List[TruePositive] = Field(default_factory=list)
    fp: List[SegmentKey] = Field(default_factory=list)
    fn: List[SegmentKey] = Field(default_factory=list)


class MatchResult(BaseModel):
    """Per-class TP/FP/FN of a prediction against ground truth."""

    model_config = ConfigDict(frozen=True)

    per_class: Dict[int, ClassMatch] = Field(default_factory=dict)
    thing_ids: List[int] = Field(default_factory=list)


class ClassPq(BaseModel):
    model_config = ConfigDict(frozen=True)

    pq: float = Field(..., ge=0.0, le=1.0)
    sq: float = Field(..., ge=0.0, le=1.0)
    rq: float = Field(..., ge=0.0, le=1.0)
    tp: int
    fp: int
    fn: int
    is_thing: bool


class PqReport(BaseModel):
    """Panoptic quality per class and aggregated over all/thing/stuff classes."""

    model_config = ConfigDict(frozen=True)

    per_class: Dict[int, ClassPq] = Field(default_factory=dict)
    pq: float = 0.0
    pq_th: float = 0.0
    pq_st: float = 0.0
    sq: float = 0.0
    rq: float = 0.0
    n: int = 0
    n_th: int = 0
    n_st: int = 0


class SemReport(ArrayModel):
    """Confusion matrix (rows gt, cols pred) over class_ids, per-class IoU and mIoU."""

    class_ids: List[int]
    confusion: np.ndarray
    per_class_iou: Dict[int, Optional[float]]
    miou: float


class ApReport(BaseModel):
    """Average precision per class and threshold for one IoU kind."""

    model_config = ConfigDict(frozen=True)

    iou_kind: Literal["box", "mask"]
    thresholds: List[float]
    per_class: Dict[int, Dict[float, float]] = Field(default_factory=dict)
    per_class_mean: Dict[int, float] = Field(default_factory=dict)
    per_threshold: Dict[float, float] = Field(default_factory=dict)
    ap: float = 0.0


class EvalReport(BaseModel):
    """One evaluation-table row: typical-class IoUs, AP^d, AP^i, PQ_th, mIoU, PQ_st, PQ."""

    model_config = ConfigDict(frozen=True)

    resolution: str
    class_iou: Dict[str, Optional[float]] = Field(default_factory=dict)
    ap_d: Optional[float] = None
    ap_i: Optional[float] = None
    pq_th: Optional[float] = None
    miou: Optional[float] = None
    pq_st: Optional[float] = None
    pq: Optional[float] = None
    pq_detail: Optional[PqReport] = None
    class_names: Dict[int, str] = Field(default_factory=dict)
