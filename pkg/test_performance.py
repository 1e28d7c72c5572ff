import statistics
import time

import numpy as np
import pytest

from conftest import make_instance
from panoptic_nav.models.depth import DepthMap
from panoptic_nav.models.frame import Frame
from panoptic_nav.models.panoptic import SemanticMap
from panoptic_nav.models.pipeline import PipelineConfig
from panoptic_nav.services.feedback_scheduler import FeedbackScheduler
from panoptic_nav.services.pipeline import FrameProcessor

pytestmark = pytest.mark.perf


def busy_frame(schema, height, width, instances=20, seed=0):
    rng = np.random.default_rng(seed)
    semantic = np.full((height, width), schema.id_of("road"), dtype=np.int32)
    semantic[: height // 3] = schema.id_of("sky")
    things = [schema.id_of(name) for name in ("car", "person", "pole", "bike")]
    predictions = []
    for _ in range(instances):
        class_id = int(rng.choice(things))
        h, w = int(rng.integers(height // 10, height // 3)), int(rng.integers(width // 20, width // 4))
        y0, x0 = int(rng.integers(0, height - h)), int(rng.integers(0, width - w))
        bits = np.zeros((height, width), dtype=bool)
        bits[y0:y0 + h, x0:x0 + w] = True
        semantic[bits] = class_id
        predictions.append(make_instance(class_id, round(float(rng.uniform(0.5, 1.0)), 3), bits))
    depths = rng.integers(0, 12000, (height, width))
    return Frame(frame_id=0, timestamp_us=0, width=width, height=height,
                 semantic=SemanticMap.from_array(semantic), depth=DepthMap.from_array(depths),
                 instances=predictions)


def median_ms(processor, frame, runs=15):
    """Median of fusion, depth statistics, scoring and one scheduler step."""
    scheduler = FeedbackScheduler(processor.config.feedback)
    scheduler.step(processor.describe_frame(frame).candidates, 0)
    samples = []
    for k in range(1, runs + 1):
        began = time.perf_counter()
        work = processor.describe_frame(frame)
        scheduler.step(work.candidates, k * 250_000)
        samples.append((time.perf_counter() - began) * 1000)
    return statistics.median(samples)


def test_full_resolution_frame_within_budget(schema):
    processor = FrameProcessor(PipelineConfig(), schema)
    assert median_ms(processor, busy_frame(schema, 480, 640)) < 50.0


def test_half_resolution_is_faster(schema):
    processor = FrameProcessor(PipelineConfig(), schema)
    full = median_ms(processor, busy_frame(schema, 480, 640))
    half = median_ms(processor, busy_frame(schema, 240, 320))
    assert half < full
