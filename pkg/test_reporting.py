import json

import numpy as np
import pytest

from conftest import CAR, PERSON, ROAD, VOID, make_instance, rect
from panoptic_nav.config import DEFAULT_AP_THRESHOLDS
from panoptic_nav.models.frame import Frame
from panoptic_nav.models.masks import BitMask, Box
from panoptic_nav.models.panoptic import FusionConfig, InstancePrediction, PanopticMap, SemanticMap
from panoptic_nav.models.reports import ClassMatch, EvalReport, MatchResult, TruePositive
from panoptic_nav.services.metrics import pq_scores
from panoptic_nav.services.reporting import (
    AGGREGATE_COLUMNS, build_eval_report, eval_report_json, evaluate_frames, format_eval_table, format_pq_detail
)
from panoptic_nav.services.resample import resample_instance, scale_box
from panoptic_nav.utils.exceptions import MetricInputException, MissingPlaneException


def gt_frame(frame_id, classes, instances):
    classes = np.asarray(classes, dtype=np.int32)
    panoptic = PanopticMap.from_planes(classes, np.asarray(instances, dtype=np.int32))
    return Frame(frame_id=frame_id, timestamp_us=frame_id * 250000, width=classes.shape[1],
                 height=classes.shape[0], panoptic=panoptic)


def scene():
    classes = np.full((6, 6), ROAD, dtype=np.int32)
    instances = np.zeros((6, 6), dtype=np.int32)
    classes[1:3, 1:3] = CAR
    instances[1:3, 1:3] = 1
    classes[4:6, 3:5] = PERSON
    instances[4:6, 3:5] = 2
    return classes, instances


def test_published_row_renders_in_table_order():
    report = EvalReport(
        resolution="480x640",
        class_iou={"pole": None, "car": 0.5},
        pq=0.227, pq_th=0.170, pq_st=0.303, miou=0.413,
    )
    text = format_eval_table([report], detail=False)
    header, row = text.splitlines()
    assert header.split() == ["Resolution", "pole", "car"] + list(AGGREGATE_COLUMNS)
    assert row.split() == ["480x640", "-", "50.0", "-", "-", "17.0", "41.3", "30.3", "22.7"]


def test_aggregate_columns_order():
    assert AGGREGATE_COLUMNS == ("AP^d", "AP^i", "PQ_th", "mIoU", "PQ_st", "PQ")


def test_detail_block_has_four_decimals(tiny_schema):
    match = MatchResult(
        per_class={CAR: ClassMatch(tp=[TruePositive(pred=(CAR, 1), gt=(CAR, 1), iou=0.8)], fp=[(CAR, 2)])},
        thing_ids=tiny_schema.thing_ids,
    )
    report = build_eval_report("1x1", tiny_schema, pq=pq_scores(match))
    detail = format_pq_detail(report)
    car_line = next(line for line in detail.splitlines() if line.startswith("car"))
    assert car_line.split()[:5] == ["car", "thing", "0.5333", "0.8000", "0.6667"]
    assert "0.5333" in format_eval_table([report])


def test_prediction_equal_to_ground_truth(tiny_schema):
    classes, instances = scene()
    gt = [gt_frame(0, classes, instances), gt_frame(1, classes, instances)]
    report = evaluate_frames(gt, gt, tiny_schema, DEFAULT_AP_THRESHOLDS,
                             typical_classes=("car", "person", "pole"))
    assert report.pq == report.pq_th == report.pq_st == 1.0
    assert report.miou == 1.0
    assert report.class_iou == {"car": 1.0, "person": 1.0, "pole": None}
    # no instance planes on the prediction side
    assert report.ap_d is None and report.ap_i is None
    row = format_eval_table([report], detail=False).splitlines()[1].split()
    assert row[-1] == "100.0"


def test_fused_predictions_fill_ap_columns(tiny_schema):
    classes, instances = scene()
    gt = [gt_frame(3, classes, instances)]
    semantic = SemanticMap.from_array(classes)
    pred = Frame(
        frame_id=3, timestamp_us=750000, width=6, height=6, semantic=semantic,
        instances=[make_instance(CAR, 0.9, instances == 1), make_instance(PERSON, 0.8, instances == 2)],
    )
    report = evaluate_frames([pred], gt, tiny_schema, [0.5], fusion=FusionConfig(min_stuff_area=0, min_instance_area=1))
    assert report.ap_d == 1.0 and report.ap_i == 1.0
    assert report.pq == 1.0
    document = json.loads(eval_report_json([report]))
    assert document["reports"][0]["resolution"] == "6x6"


def test_predictions_are_resampled_to_ground_truth(tiny_schema):
    classes = np.full((4, 4), ROAD, dtype=np.int32)
    gt = [gt_frame(0, classes, np.zeros((4, 4), dtype=np.int32))]
    small = PanopticMap.from_planes(np.full((2, 2), ROAD, dtype=np.int32), np.zeros((2, 2), dtype=np.int32))
    pred = [Frame(frame_id=0, timestamp_us=0, width=2, height=2, panoptic=small)]
    report = evaluate_frames(pred, gt, tiny_schema, [0.5])
    assert report.pq == 1.0
    assert report.resolution == "4x4"


def test_detection_ap_scores_predicted_boxes(tiny_schema):
    gt = [gt_frame(0, np.full((8, 8), CAR), np.ones((8, 8)))]
    blob = InstancePrediction(class_id=CAR, confidence=0.9, mask=BitMask.from_array(rect(8, 8, 0, 0, 1, 1)),
                              box=Box(x_min=0, y_min=0, x_max=7, y_max=7))
    pred = [Frame(frame_id=0, timestamp_us=0, width=8, height=8,
                  semantic=SemanticMap.from_array(np.full((8, 8), ROAD, dtype=np.int32)), instances=[blob])]
    report = evaluate_frames(pred, gt, tiny_schema, [0.5], fusion=FusionConfig(min_stuff_area=0, min_instance_area=1))
    assert report.ap_d == 1.0
    assert report.ap_i == 0.0


def test_predicted_boxes_are_scaled_with_their_masks(tiny_schema):
    gt = [gt_frame(0, np.full((8, 8), CAR), np.ones((8, 8)))]
    dot = InstancePrediction(class_id=CAR, confidence=0.9, mask=BitMask.from_array(rect(4, 4, 0, 0, 0, 0)),
                             box=Box(x_min=0, y_min=0, x_max=3, y_max=3))
    pred = [Frame(frame_id=0, timestamp_us=0, width=4, height=4,
                  semantic=SemanticMap.from_array(np.full((4, 4), ROAD, dtype=np.int32)), instances=[dot])]
    report = evaluate_frames(pred, gt, tiny_schema, [0.5], fusion=FusionConfig(min_stuff_area=0, min_instance_area=1))
    assert report.ap_d == 1.0


@pytest.mark.parametrize("box, src, dst, expected", [
    ((1, 1, 2, 2), (4, 4), (8, 8), (2, 2, 5, 5)),
    ((1, 0, 2, 7), (8, 8), (4, 4), (0, 0, 1, 3)),
    ((0, 0, 5, 5), (6, 6), (6, 6), (0, 0, 5, 5)),
    ((7, 7, 7, 7), (8, 8), (3, 3), (2, 2, 2, 2)),
])
def test_scale_box(box, src, dst, expected):
    scaled = scale_box(Box(x_min=box[0], y_min=box[1], x_max=box[2], y_max=box[3]), *src, *dst)
    assert scaled.as_tuple() == expected


def test_same_size_instance_passes_through():
    instance = InstancePrediction(class_id=CAR, confidence=0.5, mask=BitMask.from_array(rect(5, 5, 1, 1, 2, 2)),
                                  box=Box(x_min=0, y_min=0, x_max=4, y_max=4))
    assert resample_instance(instance, 5, 5) is instance


def test_evaluation_errors(tiny_schema):
    classes, instances = scene()
    gt = [gt_frame(0, classes, instances)]
    with pytest.raises(MetricInputException):
        evaluate_frames([gt_frame(1, classes, instances)], gt, tiny_schema, [0.5])
    with pytest.raises(MetricInputException):
        evaluate_frames([], [], tiny_schema, [0.5])
    bare = Frame(frame_id=0, timestamp_us=0, width=6, height=6,
                 semantic=SemanticMap.from_array(np.full((6, 6), VOID, dtype=np.int32)))
    with pytest.raises(MissingPlaneException):
        evaluate_frames([gt[0]], [bare], tiny_schema, [0.5])
