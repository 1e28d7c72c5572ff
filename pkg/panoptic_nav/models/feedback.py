from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from panoptic_nav.models.depth import Sector

D_CEILING_M = 10.0


class FeedbackEvent(BaseModel):
    """Prioritized assistive cue; field order is the event-log key order."""

    model_config = ConfigDict(frozen=True)

    frame_id: int = Field(..., ge=0)
    class_id: int = Field(..., ge=0)
    sector: Sector
    distance_mm: Optional[int] = Field(None, ge=0)
    priority: float = Field(..., ge=0.0)
    emitted_at_us: int = Field(..., ge=0)


class FeedbackPolicy(BaseModel):
    """Scoring and rate-control parameters for feedback events."""

    model_config = ConfigDict(frozen=True)

    d_floor_m: float = Field(0.3, gt=0.0)
    max_events_per_frame: int = Field(3, ge=0)
    repeat_suppression_us: int = Field(2_000_000, ge=0)
    reapproach_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    d_ceiling_m: float = Field(D_CEILING_M, gt=0.0)


class LastEmission(BaseModel):
    model_config = ConfigDict(frozen=True)

    emitted_at_us: int
    distance_mm: Optional[int] = None


class SchedulerState(BaseModel):
    """Scheduler memory: last emission per (class_id, sector) and the clock."""

    model_config = ConfigDict(frozen=True)

    last_timestamp_us: Optional[int] = None
    last_emitted: Dict[Tuple[int, Sector], LastEmission] = Field(default_factory=dict)
