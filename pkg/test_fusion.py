import numpy as np
import pytest

from conftest import CAR, PERSON, ROAD, SIDEWALK, VOID, make_instance, rect
from oracles import fuse_oracle
from panoptic_nav.models.masks import BitMask
from panoptic_nav.models.panoptic import FusionConfig, PanopticMap, SemanticMap
from panoptic_nav.services.fusion import fuse_frame, rank_instances, relabel_canonical, verify_panoptic
from panoptic_nav.services.label_schema import validate_map
from panoptic_nav.utils.exceptions import DimensionMismatchException, FusionInputException


def semantic_of(ids):
    return SemanticMap.from_array(np.asarray(ids, dtype=np.int32))


def test_stuff_only_frame_keeps_its_class(tiny_schema):
    semantic = semantic_of(np.full((10, 10), ROAD))
    cfg = FusionConfig(min_stuff_area=100)
    panoptic = fuse_frame(semantic, [], tiny_schema, cfg)
    assert (panoptic.class_ids == ROAD).all()
    assert (panoptic.instance_ids == 0).all()
    assert panoptic.segments == []


def test_identical_masks_keep_the_more_confident(tiny_schema):
    bits = rect(8, 8, 2, 2, 5, 5)
    semantic = semantic_of(np.where(bits, CAR, ROAD))
    cfg = FusionConfig(min_stuff_area=0, min_instance_area=1)
    panoptic = fuse_frame(semantic, [make_instance(CAR, 0.8, bits), make_instance(CAR, 0.9, bits)],
                          tiny_schema, cfg)
    assert len(panoptic.segments) == 1
    assert panoptic.segments[0].area == 16
    assert (panoptic.instance_ids[bits] == 1).all()


def test_small_stuff_and_orphan_thing_pixels_become_void(tiny_schema):
    ids = np.full((10, 10), ROAD)
    ids[0, :3] = SIDEWALK
    ids[9, 9] = CAR
    cfg = FusionConfig(min_stuff_area=5, min_instance_area=1)
    panoptic = fuse_frame(semantic_of(ids), [], tiny_schema, cfg)
    assert (panoptic.class_ids[0, :3] == VOID).all()
    assert panoptic.class_ids[9, 9] == VOID
    assert panoptic.class_ids[5, 5] == ROAD


def test_confidence_threshold_and_min_area(tiny_schema):
    semantic = semantic_of(np.full((8, 8), ROAD))
    cfg = FusionConfig(confidence_threshold=0.5, min_stuff_area=0, min_instance_area=4)
    instances = [
        make_instance(CAR, 0.4, rect(8, 8, 0, 0, 3, 3)),
        make_instance(PERSON, 0.9, rect(8, 8, 6, 6, 6, 6)),
        make_instance(PERSON, 0.7, rect(8, 8, 4, 0, 7, 1)),
    ]
    panoptic = fuse_frame(semantic, instances, tiny_schema, cfg)
    assert [(s.instance_id, s.class_id, s.area) for s in panoptic.segments] == [(1, PERSON, 8)]


def test_partial_overlap_keeps_remaining_pixels(tiny_schema):
    semantic = semantic_of(np.full((4, 8), ROAD))
    cfg = FusionConfig(min_stuff_area=0, min_instance_area=1, overlap_keep_fraction=0.5)
    first = rect(4, 8, 0, 0, 3, 3)
    second = rect(4, 8, 0, 2, 3, 5)
    panoptic = fuse_frame(semantic, [make_instance(CAR, 0.9, first), make_instance(CAR, 0.8, second)],
                          tiny_schema, cfg)
    assert [(s.instance_id, s.area) for s in panoptic.segments] == [(1, 16), (2, 8)]
    assert (panoptic.instance_ids[:, 4:6] == 2).all()


def test_rank_breaks_ties_by_class_then_mask_bytes(tiny_schema):
    a = make_instance(PERSON, 0.7, rect(4, 4, 0, 0, 0, 0))
    b = make_instance(CAR, 0.7, rect(4, 4, 3, 3, 3, 3))
    c = make_instance(CAR, 0.7, rect(4, 4, 1, 1, 1, 1))
    d = make_instance(CAR, 0.9, rect(4, 4, 2, 2, 2, 2))
    ranked = rank_instances([a, b, c, d], threshold=0.5)
    # c's leading zero-run (5) sorts before b's (15) in little-endian bytes
    assert ranked == [d, c, b, a]


def test_errors(tiny_schema):
    semantic = semantic_of(np.full((4, 4), ROAD))
    with pytest.raises(DimensionMismatchException):
        fuse_frame(semantic, [make_instance(CAR, 0.9, np.ones((3, 4), dtype=bool))], tiny_schema)
    with pytest.raises(FusionInputException, match="stuff"):
        fuse_frame(semantic, [make_instance(ROAD, 0.9, np.ones((4, 4), dtype=bool))], tiny_schema)
    with pytest.raises(FusionInputException, match="unknown"):
        fuse_frame(semantic, [make_instance(77, 0.9, np.ones((4, 4), dtype=bool))], tiny_schema)


def test_stuff_area_scales_with_frame_size():
    assert FusionConfig.for_frame(640, 480).min_stuff_area == 4096
    assert FusionConfig.for_frame(320, 240).min_stuff_area == 1024
    assert FusionConfig.for_frame(320, 240, min_stuff_area=7).min_stuff_area == 7


def random_frame(rng, tiny_schema):
    height, width = (int(v) for v in rng.integers(1, 33, 2))
    semantic = rng.choice([VOID, ROAD, SIDEWALK, CAR, PERSON], size=(height, width)).astype(np.int32)
    instances = []
    for _ in range(int(rng.integers(0, 9))):
        y0, y1 = sorted(int(v) for v in rng.integers(0, height, 2))
        x0, x1 = sorted(int(v) for v in rng.integers(0, width, 2))
        bits = rect(height, width, y0, x0, y1, x1)
        if rng.random() < 0.5:
            bits &= rng.random((height, width)) < 0.7
        if not bits.any():
            bits[y0, x0] = True
        confidence = float(rng.choice([0.3, 0.5, 0.7, 0.9, round(float(rng.random()), 3)]))
        instances.append(make_instance(int(rng.choice([CAR, PERSON])), confidence, bits))
    cfg = FusionConfig(
        confidence_threshold=float(rng.choice([0.0, 0.25, 0.5, 0.75])),
        overlap_keep_fraction=float(rng.choice([0.0, 0.5, 0.8])),
        min_stuff_area=int(rng.integers(0, 40)),
        min_instance_area=int(rng.integers(0, 6)),
    )
    return semantic_of(semantic), instances, cfg


def test_matches_straight_line_oracle(tiny_schema):
    rng = np.random.default_rng(2024)
    for _ in range(500):
        semantic, instances, cfg = random_frame(rng, tiny_schema)
        panoptic = fuse_frame(semantic, instances, tiny_schema, cfg)
        classes, ids = fuse_oracle(
            semantic.ids,
            [(i.class_id, i.confidence, i.mask.bits) for i in instances],
            set(tiny_schema.thing_ids), set(tiny_schema.stuff_ids), tiny_schema.void_id,
            cfg.confidence_threshold, cfg.overlap_keep_fraction, cfg.min_stuff_area, cfg.min_instance_area,
        )
        assert panoptic.class_ids.tobytes() == classes.tobytes()
        assert panoptic.instance_ids.tobytes() == ids.tobytes()
        assert verify_panoptic(panoptic, tiny_schema) == []
        assert validate_map(panoptic, tiny_schema).ok
        assert fuse_frame(semantic, instances, tiny_schema, cfg) == panoptic


def test_monotone_suppression_over_threshold_sweep(tiny_schema):
    rng = np.random.default_rng(5)
    for _ in range(100):
        semantic, instances, cfg = random_frame(rng, tiny_schema)
        counts = [
            len(fuse_frame(semantic, instances, tiny_schema,
                           cfg.model_copy(update={"confidence_threshold": t})).segments)
            for t in (0.0, 0.25, 0.5, 0.75, 1.0)
        ]
        assert counts == sorted(counts, reverse=True)


def test_verify_flags_broken_maps(tiny_schema):
    classes = np.array([[CAR, ROAD]], dtype=np.int32)
    instances = np.array([[0, 0]], dtype=np.int32)
    assert "thing pixel without an instance id" in verify_panoptic(
        PanopticMap.from_planes(classes, instances), tiny_schema
    )
    stale = PanopticMap(width=2, height=1, class_ids=np.array([[CAR, CAR]]),
                        instance_ids=np.array([[1, 1]]), segments=[])
    assert "segment index disagrees with the pixel grid" in verify_panoptic(stale, tiny_schema)


def test_relabel_canonical():
    classes = np.array([[CAR, CAR, PERSON], [ROAD, PERSON, CAR]], dtype=np.int32)
    instances = np.array([[2, 2, 5], [0, 5, 2]], dtype=np.int32)
    relabeled = relabel_canonical(PanopticMap.from_planes(classes, instances))
    assert relabeled.instance_ids.tolist() == [[1, 1, 2], [0, 2, 1]]
    assert (relabeled.class_ids == classes).all()
    assert relabel_canonical(relabeled) == relabeled


def test_relabel_is_idempotent_on_random_maps():
    rng = np.random.default_rng(9)
    for _ in range(50):
        instances = rng.integers(0, 6, size=(5, 5)).astype(np.int32)
        classes = np.where(instances > 0, CAR, ROAD).astype(np.int32)
        once = relabel_canonical(PanopticMap.from_planes(classes, instances))
        assert relabel_canonical(once) == once
        assert (once.class_ids == classes).all()
