"""
Spatio-temporal instance distribution over a walking sequence.

Counts are fused thing segments per frame; nothing is tracked across frames.
"""

import csv
import io
import json
from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np

from panoptic_nav.models.analytics import FrameCounts, SequenceDistribution, WindowPeak
from panoptic_nav.models.panoptic import PanopticMap
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.utils.exceptions import SequenceOrderException, UsageException


def count_instances(panoptic: PanopticMap,
                    schema: LabelSchema,
                    frame_id: int = 0,
                    timestamp_us: int = 0) -> FrameCounts:
    """Thing segments per class read from the segment index; stuff is uncountable and skipped."""
    counts: Dict[int, int] = defaultdict(int)
    for segment in panoptic.segments:
        if schema.is_thing(segment.class_id):
            counts[segment.class_id] += 1
    return FrameCounts(frame_id=frame_id, timestamp_us=timestamp_us, counts=dict(sorted(counts.items())))


def aggregate(frames: Sequence[FrameCounts], window: int) -> SequenceDistribution:
    """
    Totals and stride-1 sliding-window sums per class.

    Raises:
        UsageException: window < 1
        SequenceOrderException: frame ids not strictly ascending
    """
    if window < 1:
        raise UsageException(f"Window must be at least 1 frame, got {window}")
    for previous, current in zip(frames, frames[1:]):
        if current.frame_id <= previous.frame_id:
            raise SequenceOrderException(
                f"Frame {current.frame_id} follows frame {previous.frame_id}; counts must be in ascending frame order"
            )

    class_ids = sorted({c for f in frames for c in f.counts})
    matrix = np.zeros((len(frames), len(class_ids)), dtype=np.int64)
    for row, frame in enumerate(frames):
        for col, class_id in enumerate(class_ids):
            matrix[row, col] = frame.counts.get(class_id, 0)

    totals = {c: int(matrix[:, i].sum()) for i, c in enumerate(class_ids)}
    windowed: Dict[int, List[int]] = {}
    peaks: List[WindowPeak] = []
    for i, class_id in enumerate(class_ids):
        if len(frames) >= window:
            cumulative = np.concatenate(([0], np.cumsum(matrix[:, i])))
            sums = cumulative[window:] - cumulative[:-window]
        else:
            sums = np.zeros(0, dtype=np.int64)
        windowed[class_id] = [int(v) for v in sums]
        if sums.size:
            start = int(np.argmax(sums))
            peaks.append(WindowPeak(class_id=class_id, peak=int(sums[start]), start_frame_id=frames[start].frame_id))
        else:
            peaks.append(WindowPeak(class_id=class_id, peak=0))

    return SequenceDistribution(
        frames=list(frames), window=window, class_ids=class_ids, totals=totals, windowed=windowed, peaks=peaks
    )


def distribution_csv(distribution: SequenceDistribution, schema: LabelSchema) -> str:
    """One row per frame, one column per thing class of the schema (zeros when absent)."""
    thing_ids = schema.thing_ids
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["frame_id", "timestamp_us"] + [schema.name_of(c) for c in thing_ids])
    for frame in distribution.frames:
        writer.writerow([frame.frame_id, frame.timestamp_us] + [frame.counts.get(c, 0) for c in thing_ids])
    return buffer.getvalue()


def distribution_summary(distribution: SequenceDistribution, schema: LabelSchema) -> str:
    """JSON summary of totals and windowed peaks keyed by class name."""
    summary = {
        "frames": len(distribution.frames),
        "window": distribution.window,
        "totals": {schema.name_of(c): distribution.totals[c] for c in distribution.class_ids},
        "peaks": {
            schema.name_of(p.class_id): {"peak": p.peak, "start_frame_id": p.start_frame_id}
            for p in distribution.peaks
        },
    }
    return json.dumps(summary, indent=2)
