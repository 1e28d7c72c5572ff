from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class FrameCounts(BaseModel):
    """Thing-segment counts per class for one frame."""

    model_config = ConfigDict(frozen=True)

    frame_id: int = Field(..., ge=0)
    timestamp_us: int = Field(..., ge=0)
    counts: Dict[int, int] = Field(default_factory=dict, description="class_id -> segment count (>= 1)")


class WindowPeak(BaseModel):
    model_config = ConfigDict(frozen=True)

    class_id: int
    peak: int
    start_frame_id: Optional[int] = None


class SequenceDistribution(BaseModel):
    """Per-frame counts over a walking sequence plus totals and sliding-window sums."""

    model_config = ConfigDict(frozen=True)

    frames: List[FrameCounts]
    window: int = Field(..., ge=1)
    class_ids: List[int] = Field(default_factory=list, description="Classes seen, ascending id")
    totals: Dict[int, int] = Field(default_factory=dict)
    windowed: Dict[int, List[int]] = Field(default_factory=dict, description="Stride-1 window sums per class")
    peaks: List[WindowPeak] = Field(default_factory=list)
