from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from panoptic_nav.models.feedback import FeedbackPolicy


class LatencyStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    count: int = 0
    p50_us: int = 0
    p95_us: int = 0
    max_us: int = 0

    @model_validator(mode="after")
    def check_order(self) -> "LatencyStats":
        if not (self.p50_us <= self.p95_us <= self.max_us):
            raise ValueError("latency percentiles must satisfy p50 <= p95 <= max")
        return self


class StageTiming(BaseModel):
    """Latency summary of one pipeline stage."""

    model_config = ConfigDict(frozen=True)

    stage: str
    latency: LatencyStats


class TimingReport(BaseModel):
    """Per-stage and end-to-end latency plus frame accounting for one run."""

    model_config = ConfigDict(frozen=True)

    mode: str
    stages: List[StageTiming] = Field(default_factory=list)
    end_to_end: LatencyStats = Field(default_factory=LatencyStats)
    frames_in: int = 0
    frames_completed: int = 0
    dropped: int = 0
    errors: int = 0


class PipelineConfig(BaseModel):
    """Replay/live pipeline settings."""

    model_config = ConfigDict(frozen=True)

    mode: Literal["lossless", "latest-wins"] = "lossless"
    target_rate_fps: float = Field(4.0, gt=0.0)
    confidence_threshold: float = Field(0.5, ge=0.0, le=1.0)
    overlap_keep_fraction: float = Field(0.5, ge=0.0, le=1.0)
    min_stuff_area: Optional[int] = Field(None, ge=0, description="None scales 4096 px at 480x640")
    min_instance_area: int = Field(16, ge=0)
    feedback: FeedbackPolicy = Field(default_factory=FeedbackPolicy)
    analytics_window: int = Field(4, ge=1)
    sinks: List[Literal["fused", "events", "analytics", "timing"]] = Field(
        default_factory=lambda: ["fused", "events", "analytics", "timing"]
    )
    stage_stall_us: Dict[str, int] = Field(default_factory=dict, description="Injected per-stage delay")


class RunArtifacts(BaseModel):
    """Paths and summary produced by a replay run."""

    model_config = ConfigDict(frozen=True)

    out_dir: str
    fused_dir: Optional[str] = None
    event_log: Optional[str] = None
    analytics_csv: Optional[str] = None
    analytics_summary: Optional[str] = None
    timing_text: Optional[str] = None
    timing_json: Optional[str] = None
    processed_frame_ids: List[int] = Field(default_factory=list)
    fused_frame_ids: List[int] = Field(default_factory=list)
    frame_errors: Dict[int, str] = Field(default_factory=dict)
    timing: TimingReport
