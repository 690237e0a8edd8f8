"""Local HTTP service over the review workbench, consumed by the browser
review UI (and by curl). Serves the UI's static build when present."""

from __future__ import annotations

import logging
import mimetypes
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .questions import QuestionError, UnknownQuestion, apply_manual_flags
from .store import SchemaViolation
from .workbench import (
    BlockPatch,
    EditRecord,
    InvalidEdit,
    NoExecution,
    PrematureValidate,
    StaleEdit,
    UnknownInsight,
    Workbench,
    WorkbenchError,
)

logger = logging.getLogger(__name__)


class PatchBody(BaseModel):
    block_index: int
    before: str
    after: str


class EditBody(BaseModel):
    workflow_id: str
    category: str
    patch: list[PatchBody]
    author: str
    justification: str | None = None


class VerdictBody(BaseModel):
    verdict: str
    reason: str | None = None
    notes: str = ""
    reviewer: str


class FlagBody(BaseModel):
    flags: list[str]
    reviewer: str


def create_app(workbench: Workbench, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="review workbench")

    def insight_summary(insight_id: str) -> dict:
        _, payload = workbench.latest_insight(insight_id)
        return {
            "insight_id": insight_id,
            "summary": payload["summary"],
            "status": payload["status"],
        }

    @app.get("/api/insights")
    def list_insights(status: str | None = None):
        if status == "pending":
            ids = workbench.pending_queue()
        else:
            seen = []
            for _, payload in workbench.store.get_artifacts("insight"):
                if payload["insight_id"] not in seen:
                    seen.append(payload["insight_id"])
            ids = [
                i for i in seen
                if status is None or workbench.insight_status(i) == status
            ]
        return {"insights": [insight_summary(i) for i in ids]}

    @app.get("/api/insights/{insight_id}")
    def get_insight(insight_id: str):
        try:
            _, insight = workbench.latest_insight(insight_id)
        except UnknownInsight:
            raise HTTPException(status_code=404, detail=f"unknown insight {insight_id}")
        bundle = workbench.latest_bundle(insight_id)
        report = workbench.latest_report(insight_id)
        verdict = workbench.latest_verdict(insight_id)
        artifacts = []
        if report is not None:
            for block_index, block in enumerate(report[1]["blocks"]):
                for name in block.get("emitted_artifacts", []):
                    artifacts.append({"index": len(artifacts), "block": block_index, "name": name})
        return {
            "insight": insight,
            "bundle": bundle[1] if bundle else None,
            "report": report[1] if report else None,
            "verdict": verdict[1] if verdict else None,
            "artifacts": artifacts,
        }

    @app.get("/api/insights/{insight_id}/artifacts/{index}")
    def get_artifact(insight_id: str, index: int):
        report = workbench.latest_report(insight_id)
        if report is None:
            raise HTTPException(status_code=404, detail="no execution report")
        emitted = []
        for block in report[1]["blocks"]:
            emitted.extend(block.get("emitted_artifacts", []))
        if index < 0 or index >= len(emitted):
            raise HTTPException(status_code=404, detail=f"no artifact at index {index}")
        path = Path(report[1].get("session_dir", "")) / emitted[index]
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"artifact file gone: {emitted[index]}")
        content_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=content_type)

    @app.post("/api/insights/{insight_id}/edits")
    def post_edit(insight_id: str, body: EditBody):
        try:
            edit = EditRecord(
                workflow_id=body.workflow_id,
                category=body.category,
                patch=[BlockPatch(p.block_index, p.before, p.after) for p in body.patch],
                author=body.author,
                justification=body.justification,
            )
            new_bundle = workbench.apply_edit(insight_id, edit)
        except (InvalidEdit, SchemaViolation) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except StaleEdit as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except WorkbenchError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"bundle_id": str(new_bundle)}

    @app.post("/api/insights/{insight_id}/execute")
    def post_execute(insight_id: str):
        try:
            report_aid, report = workbench.execute(insight_id)
        except UnknownInsight as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except WorkbenchError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"report_id": str(report_aid), "report": report.to_payload()}

    @app.post("/api/insights/{insight_id}/verdict")
    def post_verdict(insight_id: str, body: VerdictBody):
        try:
            record_aid = workbench.record_verdict(
                insight_id, body.verdict, reason=body.reason,
                notes=body.notes, reviewer=body.reviewer,
            )
        except UnknownInsight as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (NoExecution, PrematureValidate) as exc:
            raise HTTPException(status_code=409, detail=type(exc).__name__ + ": " + str(exc))
        except SchemaViolation as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"record_id": str(record_aid), "status": workbench.insight_status(insight_id)}

    @app.get("/api/questions")
    def list_questions(status: str | None = None):
        latest: dict[str, dict] = {}
        for _, payload in workbench.store.get_artifacts("question"):
            latest[payload["question_id"]] = payload
        rows = [
            q for q in latest.values()
            if status is None or q["filter_status"] == status
        ]
        return {"questions": sorted(rows, key=lambda q: q["question_id"])}

    @app.post("/api/questions/{question_id}/flags")
    def post_flags(question_id: str, body: FlagBody):
        try:
            updated = apply_manual_flags(workbench.store, question_id, body.flags, body.reviewer)
        except UnknownQuestion as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (QuestionError, SchemaViolation) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"question_id": question_id, "filter_status": updated["filter_status"]}

    @app.get("/api/health")
    def health():
        return {"ok": True}

    if static_dir is not None and Path(static_dir).is_dir():
        static_dir = Path(static_dir)

        @app.get("/")
        def index():
            return FileResponse(static_dir / "index.html")

        app.mount("/ui", StaticFiles(directory=str(static_dir)), name="ui")

    return app
