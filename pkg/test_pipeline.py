import json

import numpy as np
import pytest

from oracles import latest_wins_single_stage
from panoptic_nav.config import Settings
from panoptic_nav.models.pipeline import PipelineConfig
from panoptic_nav.services.analytics import aggregate
from panoptic_nav.services.feedback_scheduler import events_from_json_lines
from panoptic_nav.services.pipeline import (
    STAGES, FrameProcessor, ReplayRunner, config_from_settings, format_timing, latency_stats, run_replay
)
from panoptic_nav.services.renderer import class_palette
from panoptic_nav.services.synthetic import FRAME_INTERVAL_US, synthetic_sequence
from panoptic_nav.storage.sequence_store import read_sequence, write_sequence
from panoptic_nav.utils.exceptions import MissingPlaneException

STALLS = {"ingest": 7, "fuse": 1_000_003, "describe": 11, "feedback": 13}


@pytest.fixture
def walk(schema):
    return synthetic_sequence(schema, frames=40, width=80, height=60)


@pytest.fixture
def walk_dir(walk, tmp_path):
    path = tmp_path / "walk"
    write_sequence(walk, path)
    return path


def test_lossless_run_keeps_every_frame(schema, walk_dir, tmp_path):
    frames = read_sequence(walk_dir)[:10]
    runner = ReplayRunner(PipelineConfig(), schema)
    report = runner.run(frames)
    assert report.frames_in == report.frames_completed == 10
    assert report.dropped == 0 and report.errors == 0
    assert runner.processed_ids == list(range(10))
    assert len(runner.fused) == 10
    assert len(runner.counts) == 10
    assert len(aggregate(runner.counts, 1).frames) == 10


def test_replay_writes_every_sink(schema, walk_dir, tmp_path):
    artifacts = run_replay(walk_dir, tmp_path / "out", PipelineConfig(), schema)
    assert artifacts.fused_frame_ids == list(range(40))
    assert len(read_sequence(artifacts.fused_dir)) == 40
    csv_lines = open(artifacts.analytics_csv, encoding="utf-8").read().splitlines()
    assert len(csv_lines) == 41
    assert json.loads(open(artifacts.timing_json, encoding="utf-8").read())["frames_completed"] == 40
    events = events_from_json_lines(open(artifacts.event_log, encoding="utf-8").read())
    per_frame = {}
    for event in events:
        per_frame.setdefault(event.frame_id, []).append(event)
    assert all(len(v) <= 3 for v in per_frame.values())


def test_lossless_replay_is_byte_identical(schema, walk_dir, tmp_path):
    first = run_replay(walk_dir, tmp_path / "a", PipelineConfig(), schema)
    second = run_replay(walk_dir, tmp_path / "b", PipelineConfig(), schema)
    for attribute in ("event_log", "analytics_csv", "analytics_summary"):
        with open(getattr(first, attribute), "rb") as a, open(getattr(second, attribute), "rb") as b:
            assert a.read() == b.read()


def test_sinks_can_be_selected(schema, walk_dir, tmp_path):
    artifacts = run_replay(walk_dir, tmp_path / "out", PipelineConfig(sinks=["events"]), schema)
    assert artifacts.event_log is not None
    assert artifacts.fused_dir is None and artifacts.analytics_csv is None and artifacts.timing_json is None
    assert not (tmp_path / "out" / "fused").exists()


def test_latest_wins_drops_match_single_server_model(schema, walk):
    config = PipelineConfig(mode="latest-wins", target_rate_fps=4.0, stage_stall_us=STALLS)
    runner = ReplayRunner(config, schema, timer=lambda: 0.0)
    report = runner.run(walk)

    arrivals = [(k * FRAME_INTERVAL_US + STALLS["ingest"], k) for k in range(len(walk))]
    served, drops = latest_wins_single_stage(arrivals, STALLS["fuse"])
    assert drops > 0
    assert report.dropped == drops
    assert runner.processed_ids == served
    assert report.frames_completed == len(served)
    assert report.frames_in == len(walk)


def test_end_to_end_covers_the_slowest_stage(schema, walk):
    config = PipelineConfig(stage_stall_us={"describe": 5000})
    report = ReplayRunner(config, schema).run(walk[:8])
    slowest = max(s.latency.max_us for s in report.stages)
    assert report.end_to_end.max_us >= slowest
    assert [s.stage for s in report.stages] == list(STAGES)
    text = format_timing(report)
    assert "end-to-end" in text and "dropped: 0" in text


def test_missing_plane_fails_only_that_frame(schema, walk):
    frames = list(walk[:5])
    frames[2] = frames[2].with_planes(instances=None)
    runner = ReplayRunner(PipelineConfig(), schema)
    report = runner.run(frames)
    assert report.errors == 1
    assert 2 in runner.frame_errors and "instances" in runner.frame_errors[2]
    assert runner.processed_ids == [0, 1, 3, 4]


def test_describe_frame_is_stateless(schema, walk):
    processor = FrameProcessor(PipelineConfig(), schema)
    first = processor.describe_frame(walk[3])
    again = processor.describe_frame(walk[3])
    assert first.panoptic == again.panoptic
    assert first.candidates == again.candidates
    assert sum(s.area for s in first.segments) == walk[3].width * walk[3].height


def test_describe_without_depth_gives_undefined_distances(schema, walk):
    work = FrameProcessor(PipelineConfig(), schema).describe_frame(walk[0].with_planes(depth=None))
    assert all(s.distance_mm is None for s in work.segments)


def test_ingest_requires_fusable_planes(schema, walk):
    processor = FrameProcessor(PipelineConfig(), schema)
    with pytest.raises(MissingPlaneException):
        processor.describe_frame(walk[0].with_planes(semantic=None))


def test_config_from_settings():
    settings = Settings(pipeline_mode="latest-wins", feedback_max_events_per_frame=5, analytics_window=2)
    config = config_from_settings(settings, sinks=["timing"])
    assert config.mode == "latest-wins"
    assert config.feedback.max_events_per_frame == 5
    assert config.analytics_window == 2
    assert config.sinks == ["timing"]


def test_latency_stats_use_observed_values():
    stats = latency_stats([5, 1, 9, 3])
    assert (stats.count, stats.max_us) == (4, 9)
    assert stats.p50_us in (3, 5)
    assert latency_stats([]).count == 0


def test_synthetic_cadence(schema, walk):
    assert [f.frame_id for f in walk] == list(range(40))
    assert [f.timestamp_us for f in walk] == [k * 250_000 for k in range(40)]
    assert all(f.plane_names == ["rgb", "semantic", "depth", "instances"] for f in walk)
    again = synthetic_sequence(schema, frames=40, width=80, height=60)
    assert all(a == b for a, b in zip(walk, again))
    assert all(f.instances for f in walk)


def test_synthetic_rgb_uses_the_class_palette(schema, walk):
    palette = class_palette(schema).astype(np.int64)
    for frame in walk[:5]:
        expected = palette[frame.semantic.ids]
        assert np.abs(frame.rgb.astype(np.int64) - expected).max() <= 12
