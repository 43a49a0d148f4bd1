from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from miko.annotation import AnnotationService
from miko.relations import RELATION_CODES
from miko.server import create_app
from test_annotation import make_pool, score_all


@pytest.fixture
def client(tmp_path):
    service = AnnotationService(make_pool(), events_path=tmp_path / "events.jsonl")
    return TestClient(create_app(service)), service


class TestTaskFlow:
    def test_next_task(self, client):
        http, _ = client
        resp = http.get("/api/tasks/next", params={"annotator": "alice"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["done"] is False
        assert len(body["task"]["intentions"]) == 10
        assert body["progress"] == {"scored_posts": 0, "total_posts": 3}

    def test_score_submission_and_done(self, client):
        http, _ = client
        for pid in ("p1", "p2", "p3"):
            for code in RELATION_CODES:
                resp = http.post("/api/scores", json={
                    "post_id": pid, "relation": code,
                    "annotator_id": "alice", "value": 1})
                assert resp.status_code == 200
        resp = http.get("/api/tasks/next", params={"annotator": "alice"})
        assert resp.json()["done"] is True

    def test_invalid_score_envelope(self, client):
        http, _ = client
        resp = http.post("/api/scores", json={
            "post_id": "p1", "relation": "xWant",
            "annotator_id": "alice", "value": 2})
        assert resp.status_code == 400
        error = resp.json()["error"]
        assert error["code"] == "InvalidValue"
        assert "message" in error

    def test_unknown_task_envelope(self, client):
        http, _ = client
        resp = http.post("/api/scores", json={
            "post_id": "p99", "relation": "xWant",
            "annotator_id": "alice", "value": 1})
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "UnknownTask"

    def test_allowlist_enforced(self, tmp_path):
        service = AnnotationService(make_pool(), events_path=tmp_path / "e.jsonl",
                                    allowlist={"alice"})
        http = TestClient(create_app(service))
        resp = http.get("/api/tasks/next", params={"annotator": "mallory"})
        assert resp.status_code == 403
        assert resp.json()["error"]["code"] == "UnknownAnnotator"


class TestReviewFlow:
    def test_queue_and_decision(self, client):
        http, service = client
        score_all(service, "p1", "alice", value=1)
        score_all(service, "p2", "alice", value=0)
        queue = http.get("/api/review/queue").json()["queue"]
        assert [item["post_id"] for item in queue] == ["p1"]
        resp = http.post("/api/review/decision", json={
            "post_id": "p1", "decision": "admit", "reviewer_id": "rev1"})
        assert resp.status_code == 200
        assert http.get("/api/review/queue").json()["queue"] == []

    def test_conflicting_decision_409(self, client):
        http, service = client
        score_all(service, "p1", "alice", value=1)
        body = {"post_id": "p1", "decision": "admit", "reviewer_id": "rev1"}
        assert http.post("/api/review/decision", json=body).status_code == 200
        resp = http.post("/api/review/decision", json=body)
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "AlreadyReviewed"

    def test_not_eligible_409(self, client):
        http, service = client
        score_all(service, "p1", "alice", value=0)
        resp = http.post("/api/review/decision", json={
            "post_id": "p1", "decision": "admit", "reviewer_id": "rev1"})
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "NotEligible"

    def test_decision_with_exclusions(self, client):
        http, service = client
        values = [1 if code != "xReact" else 0 for code in RELATION_CODES]
        score_all(service, "p1", "alice", values=values)
        resp = http.post("/api/review/decision", json={
            "post_id": "p1", "decision": "admit", "reviewer_id": "rev1",
            "excluded_relations": ["xReact"]})
        assert resp.status_code == 200
        manifest = http.get("/api/benchmark/manifest").json()
        assert manifest["total"] == 9
        assert manifest["per_relation_counts"]["xReact"] == 0


class TestAggregatesAndManifest:
    def test_aggregates_endpoint(self, client):
        http, service = client
        score_all(service, "p1", "alice", value=1)
        body = http.get("/api/aggregates").json()
        by_id = {a["post_id"]: a for a in body["aggregates"]}
        assert by_id["p1"]["total"] == 10
        assert by_id["p1"]["eligible"] is True
        assert by_id["p2"]["review_status"] == "not_eligible"

    def test_manifest_empty_409(self, client):
        http, _ = client
        resp = http.get("/api/benchmark/manifest")
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "EmptyBenchmark"


class TestStaticServing:
    def test_ui_bundle_served_at_root(self, tmp_path):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html><body>annotator</body></html>")
        service = AnnotationService(make_pool(), events_path=tmp_path / "e.jsonl")
        http = TestClient(create_app(service, static_dir=static))
        resp = http.get("/")
        assert resp.status_code == 200
        assert "annotator" in resp.text
        # API still routed ahead of the static mount
        assert http.get("/api/tasks/next", params={"annotator": "a"}).status_code == 200
