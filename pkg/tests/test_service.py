import base64
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from roiqa.aggregation import AnnotationStore, RoiTask, aggregate_roi, aggregated_to_label
from roiqa.core import DISTORTION_TYPES, RoiLabelRecord
from roiqa.service import create_app


@pytest.fixture
def store(tmp_path):
    from roiqa.distortions import save_png
    from conftest import texture_image

    img_path = tmp_path / "img0.png"
    save_png(texture_image(32, seed=0), img_path)
    tasks = [
        RoiTask(
            roi_id=f"roi{i}",
            image_path=str(img_path),
            mask_rle={"size": [32, 32], "counts": [0, 32 * 32]},
            image_id="img0",
            mask_reference=f"img0_m{i}.json",
        )
        for i in range(3)
    ]
    return AnnotationStore(tasks, tmp_path / "events.jsonl")


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def valid_rating(roi="roi0", annotator="ann1", quality=3, importance=2, blur=1):
    distortions = {dt.value: 5 for dt in DISTORTION_TYPES}
    distortions["blur"] = blur
    return {
        "roi_id": roi,
        "annotator_id": annotator,
        "distortions": distortions,
        "quality": quality,
        "importance": importance,
        "timestamp": 123.0,
    }


class TestTasksNext:
    def test_fresh_dataset_offers_a_task(self, client):
        r = client.get("/api/tasks/next", params={"annotator": "ann1"})
        assert r.status_code == 200
        assert r.json()["task"]["roi_id"] in {"roi0", "roi1", "roi2"}

    def test_missing_annotator_is_400(self, client):
        assert client.get("/api/tasks/next").status_code == 400

    def test_exhaustion_returns_null(self, client):
        for roi in ("roi0", "roi1", "roi2"):
            assert client.post("/api/ratings", json=valid_rating(roi=roi)).status_code == 200
        r = client.get("/api/tasks/next", params={"annotator": "ann1"})
        assert r.json() == {"task": None}

    def test_priority_order(self, client):
        for i in range(6):
            client.post("/api/ratings", json=valid_rating(roi="roi2", annotator=f"x{i}"))
        r = client.get("/api/tasks/next", params={"annotator": "fresh"})
        assert r.json()["task"]["roi_id"] == "roi2"


class TestRoisEndpoint:
    def test_payload_fields(self, client):
        r = client.get("/api/rois/roi0")
        assert r.status_code == 200
        body = r.json()
        assert body["mask_rle"] == {"size": [32, 32], "counts": [0, 1024]}
        png = base64.b64decode(body["image_png_base64"])
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        assert body["scales"]["quality_levels"] == ["Bad", "Poor", "Fair", "Good", "Excellent"]
        assert body["scales"]["distortion_levels"][-1] == "Non-existent"

    def test_unknown_roi_404(self, client):
        assert client.get("/api/rois/ghost").status_code == 404


class TestRatingsEndpoint:
    def test_happy_path_ack(self, client):
        r = client.post("/api/ratings", json=valid_rating())
        assert r.status_code == 200
        assert r.json() == {"roi_id": "roi0", "rater_count": 1}

    def test_range_error_400(self, client):
        bad = valid_rating()
        bad["quality"] = 7
        assert client.post("/api/ratings", json=bad).status_code == 400

    def test_missing_field_400(self, client):
        bad = valid_rating()
        del bad["importance"]
        assert client.post("/api/ratings", json=bad).status_code == 400

    def test_unknown_roi_404(self, client):
        assert client.post("/api/ratings", json=valid_rating(roi="ghost")).status_code == 404

    def test_duplicate_replaces_without_count_change(self, client):
        client.post("/api/ratings", json=valid_rating(quality=1))
        r = client.post("/api/ratings", json=valid_rating(quality=4))
        assert r.json()["rater_count"] == 1

    def test_finalized_resubmission_409(self, client):
        for i in range(7):
            client.post("/api/ratings", json=valid_rating(annotator=f"a{i}"))
        r = client.post("/api/ratings", json=valid_rating(annotator="a0", quality=0))
        assert r.status_code == 409


class TestProgressAndExport:
    def test_progress_counts(self, client):
        client.post("/api/ratings", json=valid_rating())
        body = client.get("/api/progress").json()
        assert body["total_rois"] == 3
        assert body["per_roi"]["roi0"] == 1
        assert body["target_raters"] == 7

    def test_export_matches_direct_aggregation(self, client, store):
        rng = np.random.default_rng(3)
        for i in range(7):
            payload = valid_rating(
                roi="roi1",
                annotator=f"a{i}",
                quality=int(rng.integers(0, 5)),
                importance=int(rng.integers(0, 5)),
                blur=int(rng.integers(0, 6)),
            )
            assert client.post("/api/ratings", json=payload).status_code == 200
        text = client.get("/api/export").text
        lines = [json.loads(l) for l in text.strip().splitlines()]
        assert len(lines) == 1
        exported = RoiLabelRecord.from_json_dict(lines[0])
        expect = aggregated_to_label(
            aggregate_roi(store.ratings_for("roi1")),
            image_id="img0",
            mask_reference="img0_m1.json",
        )
        assert exported == expect

    def test_export_empty(self, client):
        assert client.get("/api/export").text == ""
