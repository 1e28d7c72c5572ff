import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import CAR, PERSON, ROAD, make_instance, rect
from panoptic_nav.main import VERSION, create_app
from panoptic_nav.models.depth import DepthMap
from panoptic_nav.models.frame import Frame
from panoptic_nav.models.panoptic import SemanticMap
from panoptic_nav.models.pipeline import PipelineConfig
from panoptic_nav.services.frame_codec import encode_frame


@pytest.fixture
def client(tiny_schema):
    config = PipelineConfig(min_stuff_area=0, min_instance_area=1)
    return TestClient(create_app(schema=tiny_schema, config=config))


def street_frame():
    ids = np.full((6, 9), ROAD, dtype=np.int32)
    car = rect(6, 9, 2, 0, 4, 2)
    person = rect(6, 9, 1, 6, 5, 7)
    ids[car] = CAR
    ids[person] = PERSON
    depths = np.full((6, 9), 5000)
    depths[car] = 1000
    depths[person] = 4000
    return Frame(frame_id=12, timestamp_us=3_000_000, width=9, height=6,
                 semantic=SemanticMap.from_array(ids), depth=DepthMap.from_array(depths),
                 instances=[make_instance(CAR, 0.9, car), make_instance(PERSON, 0.8, person)])


def test_root_and_health(client):
    body = client.get("/").json()
    assert body["version"] == VERSION
    health = client.get("/health").json()
    assert health["status"] == "healthy"
    assert health["live_server"] is None


def test_schema_route(client):
    body = client.get("/api/v1/schema").json()
    assert body["success"] is True
    assert [c["name"] for c in body["data"]["classes"]] == ["void", "road", "sidewalk", "car", "person"]


def test_timing_is_null_without_a_live_session(client):
    body = client.get("/api/v1/timing").json()
    assert body["success"] is True and body["data"] is None


def test_describe_frame(client):
    response = client.post("/api/v1/frames/describe", content=encode_frame(street_frame()))
    assert response.status_code == 200
    assert "X-Process-Time" in response.headers
    data = response.json()["data"]
    assert data["frame_id"] == 12
    assert len(data["instances"]) == 2
    assert sum(s["area"] for s in data["segments"]) == 54
    # car weight 2.0 at 1 m beats person weight 1.0 at 4 m
    assert [(c["class_id"], c["sector"]) for c in data["candidates"]] == [(CAR, "left"), (PERSON, "right")]
    assert data["candidates"][0]["priority"] == pytest.approx(2.0)
    assert data["candidates"][0]["distance_mm"] == 1000


def test_describe_is_stateless(client):
    payload = encode_frame(street_frame())
    first = client.post("/api/v1/frames/describe", content=payload).json()
    second = client.post("/api/v1/frames/describe", content=payload).json()
    assert first["data"]["candidates"] == second["data"]["candidates"]


def test_bad_body_returns_error_json(client):
    response = client.post("/api/v1/frames/describe", content=b"\x01\x02")
    assert response.status_code == 422
    body = response.json()
    assert body["success"] is False
    assert "Truncated" in body["error"]
    assert body["kind"] == "TruncatedBufferException"
    assert body["where"] == {"section": "header"}


def test_frame_without_fusable_planes(client):
    bare = Frame(frame_id=1, timestamp_us=0, width=2, height=2)
    response = client.post("/api/v1/frames/describe", content=encode_frame(bare))
    assert response.status_code == 422
    body = response.json()
    assert "semantic" in body["error"]
    assert body["kind"] == "MissingPlaneException"
    assert body["where"] == {"plane": "semantic", "frame_id": 1}
