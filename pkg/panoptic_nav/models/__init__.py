from .schema import ClassDef, LabelSchema, MapValidation
from .masks import BitMask, RleMask, Box
from .panoptic import (
    SemanticMap, InstancePrediction, GroundTruthInstance, PanopticMap, SegmentEntry, FusionConfig
)
from .depth import DepthMap, SegmentInfo, Sector
from .frame import Frame, WireMessage, MessageType
from .reports import MatchResult, ClassMatch, TruePositive, PqReport, ClassPq, SemReport, ApReport, EvalReport
from .analytics import FrameCounts, SequenceDistribution, WindowPeak
from .feedback import FeedbackEvent, FeedbackPolicy, SchedulerState
from .pipeline import StageTiming, LatencyStats, TimingReport, PipelineConfig, RunArtifacts
from .system_log import SystemLogCreate

__all__ = [
    "ClassDef", "LabelSchema", "MapValidation",
    "BitMask", "RleMask", "Box",
    "SemanticMap", "InstancePrediction", "GroundTruthInstance", "PanopticMap", "SegmentEntry", "FusionConfig",
    "DepthMap", "SegmentInfo", "Sector",
    "Frame", "WireMessage", "MessageType",
    "MatchResult", "ClassMatch", "TruePositive", "PqReport", "ClassPq", "SemReport", "ApReport", "EvalReport",
    "FrameCounts", "SequenceDistribution", "WindowPeak",
    "FeedbackEvent", "FeedbackPolicy", "SchedulerState",
    "StageTiming", "LatencyStats", "TimingReport", "PipelineConfig", "RunArtifacts",
    "SystemLogCreate",
]
