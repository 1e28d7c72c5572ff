"""
Staged frame pipeline: ingest -> fuse -> describe -> feedback.

Replay runs the stages on a virtual clock. Frame k arrives at k / target_rate_fps;
each stage serves one frame at a time for its measured duration plus any injected
stall; between stages sits a hand-off slot that is an unbounded FIFO in lossless
mode and a capacity-1 slot in latest-wins mode, where a newer frame replaces a
waiting one. At equal virtual times arrivals are handled before completions.
"""

import heapq
import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, Iterable, List, Optional, Tuple

import numpy as np

from panoptic_nav.config import Settings
from panoptic_nav.models.analytics import FrameCounts
from panoptic_nav.models.depth import DepthMap, SegmentInfo
from panoptic_nav.models.feedback import FeedbackEvent, FeedbackPolicy
from panoptic_nav.models.frame import Frame
from panoptic_nav.models.panoptic import FusionConfig, PanopticMap
from panoptic_nav.models.pipeline import LatencyStats, PipelineConfig, RunArtifacts, StageTiming, TimingReport
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.analytics import aggregate, count_instances, distribution_csv, distribution_summary
from panoptic_nav.services.depth_stats import segment_stats
from panoptic_nav.services.feedback_scheduler import EventLogWriter, FeedbackScheduler, score_segments
from panoptic_nav.services.fusion import fuse_frame
from panoptic_nav.storage.sequence_store import iter_sequence, write_sequence
from panoptic_nav.utils.exceptions import BasePanopticException, MissingPlaneException
from panoptic_nav.utils.logger import get_logger, log_event

logger = get_logger(__name__)

STAGES = ("ingest", "fuse", "describe", "feedback")

Timer = Callable[[], float]


@dataclass
class FrameWork:
    """One frame in flight and the results the stages attach to it."""

    frame: Frame
    arrived_us: int = 0
    fusion: Optional[FusionConfig] = None
    panoptic: Optional[PanopticMap] = None
    segments: List[SegmentInfo] = field(default_factory=list)
    candidates: List[FeedbackEvent] = field(default_factory=list)
    events: List[FeedbackEvent] = field(default_factory=list)
    stage_us: Dict[str, int] = field(default_factory=dict)


class FrameProcessor:
    """Stage functions shared by replay, the live server and the HTTP describe route."""

    def __init__(self, config: PipelineConfig, schema: LabelSchema):
        self.config = config
        self.schema = schema

    def fusion_config(self, frame: Frame) -> FusionConfig:
        return FusionConfig.for_frame(
            frame.width,
            frame.height,
            confidence_threshold=self.config.confidence_threshold,
            overlap_keep_fraction=self.config.overlap_keep_fraction,
            min_stuff_area=self.config.min_stuff_area,
            min_instance_area=self.config.min_instance_area,
        )

    def ingest(self, work: FrameWork) -> None:
        frame = work.frame
        if frame.panoptic is None:
            for plane in ("semantic", "instances"):
                if getattr(frame, plane) is None:
                    raise MissingPlaneException(frame.frame_id, plane)
        work.fusion = self.fusion_config(frame)

    def fuse(self, work: FrameWork) -> None:
        frame = work.frame
        if frame.semantic is not None and frame.instances is not None:
            work.panoptic = fuse_frame(frame.semantic, frame.instances, self.schema, work.fusion)
        else:
            work.panoptic = frame.panoptic

    def describe(self, work: FrameWork) -> None:
        depth = work.frame.depth
        if depth is None:
            # no depth plane: every distance is undefined
            depth = DepthMap(width=work.frame.width, height=work.frame.height,
                             depths=np.zeros((work.frame.height, work.frame.width), dtype=np.uint16))
        work.segments = segment_stats(work.panoptic, depth)
        work.candidates = score_segments(
            work.segments, self.schema, self.config.feedback, work.frame.frame_id, work.frame.timestamp_us
        )

    def run_stage(self, stage: str, work: FrameWork) -> None:
        getattr(self, stage)(work)

    def describe_frame(self, frame: Frame) -> FrameWork:
        """Stateless ingest + fuse + describe of one frame."""
        work = FrameWork(frame=frame)
        for stage in STAGES[:-1]:
            self.run_stage(stage, work)
        return work


def config_from_settings(settings: Settings, **overrides) -> PipelineConfig:
    """PipelineConfig from the resolved settings; keyword overrides win."""
    values = dict(
        mode=settings.pipeline_mode,
        target_rate_fps=settings.pipeline_target_rate_fps,
        confidence_threshold=settings.fusion_confidence_threshold,
        overlap_keep_fraction=settings.fusion_overlap_keep_fraction,
        min_stuff_area=settings.fusion_min_stuff_area,
        min_instance_area=settings.fusion_min_instance_area,
        feedback=FeedbackPolicy(
            d_floor_m=settings.feedback_d_floor_m,
            max_events_per_frame=settings.feedback_max_events_per_frame,
            repeat_suppression_us=settings.feedback_repeat_suppression_us,
            reapproach_fraction=settings.feedback_reapproach_fraction,
            d_ceiling_m=settings.feedback_d_ceiling_m,
        ),
        analytics_window=settings.analytics_window,
    )
    values.update(overrides)
    return PipelineConfig(**values)


def latency_stats(values: Iterable[int]) -> LatencyStats:
    data = np.asarray(list(values), dtype=np.int64)
    if data.size == 0:
        return LatencyStats()
    return LatencyStats(
        count=int(data.size),
        p50_us=int(np.percentile(data, 50, method="nearest")),
        p95_us=int(np.percentile(data, 95, method="nearest")),
        max_us=int(data.max()),
    )


class TimingAccumulator:
    """Per-stage and end-to-end latency samples plus frame accounting."""

    def __init__(self, mode: str):
        self.mode = mode
        self.stage_samples: Dict[str, List[int]] = {stage: [] for stage in STAGES}
        self.end_to_end: List[int] = []
        self.frames_in = 0
        self.dropped = 0
        self.errors = 0

    def report(self) -> TimingReport:
        return TimingReport(
            mode=self.mode,
            stages=[StageTiming(stage=s, latency=latency_stats(v)) for s, v in self.stage_samples.items()],
            end_to_end=latency_stats(self.end_to_end),
            frames_in=self.frames_in,
            frames_completed=len(self.end_to_end),
            dropped=self.dropped,
            errors=self.errors,
        )


def format_timing(report: TimingReport) -> str:
    lines = [
        f"mode: {report.mode}",
        f"frames in: {report.frames_in}  completed: {report.frames_completed}  "
        f"dropped: {report.dropped}  errors: {report.errors}",
        f"{'stage':<12}{'count':>8}{'p50_us':>12}{'p95_us':>12}{'max_us':>12}",
    ]
    rows = [(s.stage, s.latency) for s in report.stages] + [("end-to-end", report.end_to_end)]
    for name, stats in rows:
        lines.append(f"{name:<12}{stats.count:>8}{stats.p50_us:>12}{stats.p95_us:>12}{stats.max_us:>12}")
    return "\n".join(lines) + "\n"


class _Slot:
    """Hand-off between two stages."""

    def __init__(self, latest_wins: bool):
        self.latest_wins = latest_wins
        self.items: Deque[FrameWork] = deque()

    def put(self, work: FrameWork) -> Optional[FrameWork]:
        """Queue a frame; returns the frame it replaced in latest-wins mode."""
        replaced = None
        if self.latest_wins and self.items:
            replaced = self.items.popleft()
        self.items.append(work)
        return replaced

    def take(self) -> Optional[FrameWork]:
        return self.items.popleft() if self.items else None


class ReplayRunner:
    """
    Virtual-clock replay of a frame sequence through the four stages.

    Args:
        config: Pipeline settings (mode, rate, fusion, feedback, sinks, stalls)
        schema: Active label schema
        timer: Wall-clock source used to measure stage work, in seconds
    """

    _ARRIVAL = 0
    _COMPLETION = 1

    def __init__(self, config: PipelineConfig, schema: LabelSchema, timer: Timer = time.perf_counter):
        self.config = config
        self.schema = schema
        self.timer = timer
        self.processor = FrameProcessor(config, schema)
        self.scheduler = FeedbackScheduler(config.feedback)
        self.timing = TimingAccumulator(config.mode)
        self.frame_errors: Dict[int, str] = {}
        self.counts: List[FrameCounts] = []
        self.fused: List[Frame] = []
        self.events: List[FeedbackEvent] = []
        self.processed_ids: List[int] = []

    def run(self, frames: Iterable[Frame]) -> TimingReport:
        latest_wins = self.config.mode == "latest-wins"
        slots = [_Slot(latest_wins) for _ in STAGES]
        busy: List[Optional[FrameWork]] = [None] * len(STAGES)
        heap: List[Tuple[int, int, int, int, int]] = []
        seq = 0
        pending: Dict[int, FrameWork] = {}

        period_us = 1_000_000 / self.config.target_rate_fps
        for k, frame in enumerate(frames):
            arrival = int(round(k * period_us))
            pending[seq] = FrameWork(frame=frame, arrived_us=arrival)
            heapq.heappush(heap, (arrival, self._ARRIVAL, seq, 0, 0))
            seq += 1
            self.timing.frames_in += 1

        def start(stage: int, work: FrameWork, now: int) -> None:
            nonlocal seq
            busy[stage] = work
            name = STAGES[stage]
            began = self.timer()
            try:
                if name == "feedback":
                    self._feedback(work)
                else:
                    self.processor.run_stage(name, work)
                failed = False
            except BasePanopticException as e:
                self._record_error(work, name, e)
                failed = True
            service = int(round((self.timer() - began) * 1_000_000)) + self.config.stage_stall_us.get(name, 0)
            work.stage_us[name] = service
            self.timing.stage_samples[name].append(service)
            key = seq
            seq += 1
            pending[key] = work
            heapq.heappush(heap, (now + service, self._COMPLETION, key, stage, 1 if failed else 0))

        def offer(stage: int, work: FrameWork, now: int) -> None:
            if busy[stage] is None and not slots[stage].items:
                start(stage, work, now)
                return
            replaced = slots[stage].put(work)
            if replaced is not None:
                self.timing.dropped += 1
                logger.debug(f"Frame {replaced.frame.frame_id} dropped before {STAGES[stage]}")

        while heap:
            now, kind, key, stage, failed = heapq.heappop(heap)
            work = pending.pop(key)
            if kind == self._ARRIVAL:
                offer(0, work, now)
                continue

            busy[stage] = None
            if not failed:
                self._on_stage_done(stage, work, now)
                if stage + 1 < len(STAGES):
                    offer(stage + 1, work, now)
            following = slots[stage].take()
            if following is not None:
                start(stage, following, now)

        report = self.timing.report()
        log_event("pipeline", "info", f"Replay finished: {report.frames_completed}/{report.frames_in} frames",
                  {"mode": report.mode, "dropped": report.dropped, "errors": report.errors})
        return report

    def _feedback(self, work: FrameWork) -> None:
        work.events = self.scheduler.step(work.candidates, work.frame.timestamp_us)

    def _on_stage_done(self, stage: int, work: FrameWork, now: int) -> None:
        name = STAGES[stage]
        if name == "fuse":
            frame = work.frame
            self.counts.append(count_instances(work.panoptic, self.schema, frame.frame_id, frame.timestamp_us))
            if "fused" in self.config.sinks:
                self.fused.append(Frame(
                    frame_id=frame.frame_id, timestamp_us=frame.timestamp_us,
                    width=frame.width, height=frame.height, panoptic=work.panoptic,
                ))
        elif name == "feedback":
            self.events.extend(work.events)
            self.processed_ids.append(work.frame.frame_id)
            self.timing.end_to_end.append(now - work.arrived_us)

    def _record_error(self, work: FrameWork, stage: str, error: BasePanopticException) -> None:
        self.timing.errors += 1
        self.frame_errors[work.frame.frame_id] = error.detail
        log_event("pipeline", "error", f"Frame {work.frame.frame_id} failed in {stage}: {error.detail}",
                  {"frame_id": work.frame.frame_id, "stage": stage})


def run_replay(sequence_path, out_dir, config: PipelineConfig, schema: LabelSchema,
               timer: Timer = time.perf_counter) -> RunArtifacts:
    """
    Replay an on-disk sequence and write the selected sinks to out_dir.

    Sinks: fused/ (sequence of panoptic frames), events.jsonl, analytics.csv with
    analytics_summary.json, timing.txt with timing.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = ReplayRunner(config, schema, timer)
    report = runner.run(iter_sequence(sequence_path))

    paths: Dict[str, Optional[str]] = {}
    if "fused" in config.sinks:
        fused_dir = out / "fused"
        write_sequence(runner.fused, fused_dir)
        paths["fused_dir"] = str(fused_dir)
    if "events" in config.sinks:
        event_log = out / "events.jsonl"
        with open(event_log, "w", encoding="utf-8", newline="\n") as handle:
            EventLogWriter(handle).write(runner.events)
        paths["event_log"] = str(event_log)
    if "analytics" in config.sinks:
        distribution = aggregate(runner.counts, config.analytics_window)
        csv_path = out / "analytics.csv"
        summary_path = out / "analytics_summary.json"
        csv_path.write_text(distribution_csv(distribution, schema), encoding="utf-8", newline="")
        summary_path.write_text(distribution_summary(distribution, schema) + "\n", encoding="utf-8")
        paths["analytics_csv"] = str(csv_path)
        paths["analytics_summary"] = str(summary_path)
    if "timing" in config.sinks:
        text_path = out / "timing.txt"
        json_path = out / "timing.json"
        text_path.write_text(format_timing(report), encoding="utf-8")
        json_path.write_text(json.dumps(report.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
        paths["timing_text"] = str(text_path)
        paths["timing_json"] = str(json_path)

    return RunArtifacts(
        out_dir=str(out),
        processed_frame_ids=runner.processed_ids,
        fused_frame_ids=[f.frame_id for f in runner.fused],
        frame_errors=runner.frame_errors,
        timing=report,
        **paths,
    )
