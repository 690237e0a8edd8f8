from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from benchsmith.sandbox import SandboxLimits
from benchsmith.service import create_app
from benchsmith.workbench import Workbench

from conftest import stamp


@pytest.fixture
def client(store, sample_payloads, tmp_path):
    store.put_artifact("paper", sample_payloads["paper"], stamp())
    for i in (1, 2):
        insight = dict(sample_payloads["insight"])
        insight["insight_id"] = f"p1-i{i}"
        store.put_artifact("insight", insight, stamp(stage="insight-extraction"))
        workflow = dict(sample_payloads["workflow"])
        workflow["workflow_id"] = f"w{i}"
        workflow["insight_id"] = f"p1-i{i}"
        workflow["blocks"] = [
            {"code": "open('fig.png', 'wb').write(bytes([137, 80, 78, 71]))",
             "reasoning": "emit a figure", "derived_from": []},
            {"code": "print('done')", "reasoning": "finish", "derived_from": []},
        ]
        store.put_artifact("workflow", workflow, stamp(stage="workflow-generation"))
    bench = Workbench(
        store=store,
        sessions_root=tmp_path / "sessions",
        limits=SandboxLimits(per_block_seconds=20, total_seconds=60),
    )
    return TestClient(create_app(bench))


class TestInsightEndpoints:
    def test_pending_list(self, client):
        body = client.get("/api/insights", params={"status": "pending"}).json()
        assert [i["insight_id"] for i in body["insights"]] == ["p1-i1", "p1-i2"]

    def test_detail_view(self, client):
        body = client.get("/api/insights/p1-i1").json()
        assert body["insight"]["insight_id"] == "p1-i1"
        assert body["bundle"]["workflow_id"] == "w1"
        assert body["report"] is None
        assert body["verdict"] is None

    def test_unknown_insight_404(self, client):
        assert client.get("/api/insights/ghost").status_code == 404

    def test_execute_then_artifact_bytes(self, client):
        result = client.post("/api/insights/p1-i1/execute").json()
        assert [b["status"] for b in result["report"]["blocks"]] == ["ok", "ok"]
        listing = client.get("/api/insights/p1-i1").json()
        assert listing["artifacts"] == [{"index": 0, "block": 0, "name": "fig.png"}]
        artifact = client.get("/api/insights/p1-i1/artifacts/0")
        assert artifact.status_code == 200
        assert artifact.headers["content-type"] == "image/png"
        assert artifact.content.startswith(bytes([137, 80, 78, 71]))

    def test_artifact_missing_index_404(self, client):
        client.post("/api/insights/p1-i1/execute")
        assert client.get("/api/insights/p1-i1/artifacts/7").status_code == 404


class TestVerdictFlow:
    def test_verdict_without_execution_409(self, client):
        body = {"verdict": "validated", "notes": "", "reviewer": "r-1"}
        response = client.post("/api/insights/p1-i1/verdict", json=body)
        assert response.status_code == 409
        assert "NoExecution" in response.json()["detail"]

    def test_validated_removes_from_pending(self, client):
        client.post("/api/insights/p1-i1/execute")
        body = {"verdict": "validated", "notes": "matches", "reviewer": "r-1"}
        response = client.post("/api/insights/p1-i1/verdict", json=body)
        assert response.status_code == 200
        assert response.json()["status"] == "validated"
        pending = client.get("/api/insights", params={"status": "pending"}).json()
        assert [i["insight_id"] for i in pending["insights"]] == ["p1-i2"]

    def test_invalidated_without_reason_400(self, client):
        client.post("/api/insights/p1-i1/execute")
        body = {"verdict": "invalidated", "notes": "", "reviewer": "r-1"}
        response = client.post("/api/insights/p1-i1/verdict", json=body)
        assert response.status_code == 400

    def test_premature_validate_surfaced(self, client):
        edit = {
            "workflow_id": "w1",
            "category": "metadata-renaming",
            "patch": [{
                "block_index": 1,
                "before": "print('done')",
                "after": "raise ValueError('broken')",
            }],
            "author": "r-1",
        }
        assert client.post("/api/insights/p1-i1/edits", json=edit).status_code == 200
        client.post("/api/insights/p1-i1/execute")
        body = {"verdict": "validated", "notes": "", "reviewer": "r-1"}
        response = client.post("/api/insights/p1-i1/verdict", json=body)
        assert response.status_code == 409
        assert "PrematureValidate" in response.json()["detail"]


class TestQuestionFlags:
    def seed_kept_question(self, client, store):
        from benchsmith.questions import record_filter_outcome

        question = {
            "question_id": "p1-i1-oeq1", "insight_id": "p1-i1", "kind": "oeq",
            "question": "What changes?", "answer": "It grows.",
            "filter_status": "draft", "flags": [],
        }
        aid = store.put_artifact("question", question, stamp(stage="question-generation"))
        record_filter_outcome(store, aid, {
            "question_id": "p1-i1-oeq1",
            "outcomes": [
                {"model_id": "a", "answer": "x", "rating": 2},
                {"model_id": "b", "answer": "y", "rating": 2},
            ],
            "decision": "kept", "rule_applied": "discard iff both judge ratings exceed 3.0",
        })

    def test_flag_flow(self, client, store):
        self.seed_kept_question(client, store)
        listing = client.get("/api/questions", params={"status": "auto-kept"}).json()
        assert [q["question_id"] for q in listing["questions"]] == ["p1-i1-oeq1"]

        response = client.post("/api/questions/p1-i1-oeq1/flags",
                               json={"flags": ["duplicate"], "reviewer": "r-1"})
        assert response.json()["filter_status"] == "manually-flagged"

        response = client.post("/api/questions/p1-i1-oeq1/flags",
                               json={"flags": [], "reviewer": "r-1"})
        assert response.status_code == 409  # no longer auto-kept

    def test_unknown_question_404(self, client):
        response = client.post("/api/questions/ghost/flags",
                               json={"flags": [], "reviewer": "r-1"})
        assert response.status_code == 404


class TestEditEndpoint:
    def test_stale_edit_409(self, client):
        edit = {
            "workflow_id": "w1",
            "category": "dataset-loading",
            "patch": [{"block_index": 1, "before": "print('done')", "after": "print('ok')"}],
            "author": "r-1",
        }
        assert client.post("/api/insights/p1-i1/edits", json=edit).status_code == 200
        response = client.post("/api/insights/p1-i1/edits", json=edit)
        assert response.status_code == 409

    def test_other_without_justification_400(self, client):
        edit = {
            "workflow_id": "w1",
            "category": "other",
            "patch": [{"block_index": 0, "before": "x", "after": "y"}],
            "author": "r-1",
        }
        assert client.post("/api/insights/p1-i1/edits", json=edit).status_code == 400
