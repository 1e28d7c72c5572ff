"""
Priority scoring and rate control for assistive feedback events.

Within a frame, candidates are walked in priority order; a candidate whose
(class, sector) was announced less than repeat_suppression_us ago is skipped
unless it came closer by more than reapproach_fraction, and emission stops once
max_events_per_frame events went out. Skipped candidates never touch the state.
"""

import threading
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

from panoptic_nav.models.depth import Sector, SegmentInfo
from panoptic_nav.models.feedback import FeedbackEvent, FeedbackPolicy, LastEmission, SchedulerState
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.utils.exceptions import SchedulerTimeRegressionException
from panoptic_nav.utils.logger import get_logger

logger = get_logger(__name__)


def priority_of(weight: float, distance_mm: Optional[int], policy: FeedbackPolicy) -> float:
    if distance_mm is None:
        return weight / policy.d_ceiling_m
    return weight / max(distance_mm / 1000.0, policy.d_floor_m)


def candidate_order(event: FeedbackEvent) -> Tuple:
    """Priority desc, then class id, sector (left < center < right) and distance."""
    distance = event.distance_mm if event.distance_mm is not None else float("inf")
    return (-event.priority, event.class_id, event.sector.rank, distance)


def score_segments(segments: Sequence[SegmentInfo],
                   schema: LabelSchema,
                   policy: FeedbackPolicy,
                   frame_id: int = 0,
                   timestamp_us: int = 0) -> List[FeedbackEvent]:
    """One candidate per thing segment, in candidate order."""
    candidates = [
        FeedbackEvent(
            frame_id=frame_id,
            class_id=s.class_id,
            sector=s.sector,
            distance_mm=s.distance_mm,
            priority=priority_of(schema.get(s.class_id).weight, s.distance_mm, policy),
            emitted_at_us=timestamp_us,
        )
        for s in segments
        if schema.is_thing(s.class_id)
    ]
    return sorted(candidates, key=candidate_order)


def schedule(candidates: Sequence[FeedbackEvent],
             policy: FeedbackPolicy,
             state: SchedulerState,
             timestamp_us: int) -> Tuple[List[FeedbackEvent], SchedulerState]:
    """
    Select this frame's emissions and return them with the advanced state.

    Raises:
        SchedulerTimeRegressionException: timestamp earlier than the previous frame
    """
    if state.last_timestamp_us is not None and timestamp_us < state.last_timestamp_us:
        raise SchedulerTimeRegressionException(state.last_timestamp_us, timestamp_us)

    last_emitted: Dict[Tuple[int, Sector], LastEmission] = dict(state.last_emitted)
    emitted: List[FeedbackEvent] = []
    for candidate in sorted(candidates, key=candidate_order):
        if len(emitted) >= policy.max_events_per_frame:
            break
        key = (candidate.class_id, candidate.sector)
        previous = last_emitted.get(key)
        if previous is not None and _suppressed(previous, candidate, policy, timestamp_us):
            continue
        event = candidate.model_copy(update={"emitted_at_us": timestamp_us})
        emitted.append(event)
        last_emitted[key] = LastEmission(emitted_at_us=timestamp_us, distance_mm=candidate.distance_mm)

    return emitted, SchedulerState(last_timestamp_us=timestamp_us, last_emitted=last_emitted)


def _suppressed(previous: LastEmission, candidate: FeedbackEvent, policy: FeedbackPolicy, now_us: int) -> bool:
    if now_us - previous.emitted_at_us >= policy.repeat_suppression_us:
        return False
    if previous.distance_mm is not None and candidate.distance_mm is not None:
        if previous.distance_mm - candidate.distance_mm > policy.reapproach_fraction * previous.distance_mm:
            return False
    return True


class FeedbackScheduler:
    """
    Single-owner wrapper that advances scheduler state frame by frame.

    The replay pipeline and each live connection own exactly one instance.
    """

    def __init__(self, policy: FeedbackPolicy, state: Optional[SchedulerState] = None):
        self.policy = policy
        self.state = state or SchedulerState()
        self.suppressed_total = 0

    def step(self, candidates: Sequence[FeedbackEvent], timestamp_us: int) -> List[FeedbackEvent]:
        emitted, self.state = schedule(candidates, self.policy, self.state, timestamp_us)
        if len(candidates) > len(emitted):
            self.suppressed_total += len(candidates) - len(emitted)
            logger.debug(f"{len(candidates) - len(emitted)} candidates not announced at {timestamp_us} us")
        return emitted


class EventLogWriter:
    """Appends events as JSON lines with keys in FeedbackEvent field order."""

    def __init__(self, handle: TextIO):
        self.handle = handle
        self.count = 0
        self._lock = threading.Lock()

    def write(self, events: Iterable[FeedbackEvent]) -> None:
        with self._lock:
            for event in events:
                self.handle.write(event_to_json(event) + "\n")
                self.count += 1


def event_to_json(event: FeedbackEvent) -> str:
    return event.model_dump_json()


def events_from_json_lines(text: str) -> List[FeedbackEvent]:
    return [FeedbackEvent.model_validate_json(line) for line in text.splitlines() if line.strip()]
