"""Review workbench: run workflows against their datasets, track reviewer
edits, and record the human verdicts that gate question generation."""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .ingest import DatasetManifest
from .insights import WorkflowBundle
from .sandbox import ExecutionReport, InterpreterConfig, SandboxLimits, execute_workflow
from .store import ArtifactId, ArtifactStore, ProvenanceStamp, utc_now

logger = logging.getLogger(__name__)

EDIT_CATEGORIES = ("dataset-loading", "gene-id-mapping", "metadata-renaming", "other")
INVALIDATION_REASONS = (
    "insufficient-dataset-info",
    "workflow-dataset-inconsistency",
    "overly-generic",
    "other",
)


class WorkbenchError(Exception):
    pass


class StaleEdit(WorkbenchError):
    """The edit's before-text no longer matches the current block."""


class InvalidEdit(WorkbenchError):
    pass


class NoExecution(WorkbenchError):
    """Verdict attempted without any execution report."""


class PrematureValidate(WorkbenchError):
    """Validation attempted although the latest run has failing blocks."""


class UnknownInsight(WorkbenchError):
    pass


@dataclass
class BlockPatch:
    block_index: int
    before: str
    after: str


@dataclass
class EditRecord:
    workflow_id: str
    category: str
    patch: list[BlockPatch]
    author: str
    justification: str | None = None

    def __post_init__(self):
        if self.category not in EDIT_CATEGORIES:
            raise InvalidEdit(f"unknown edit category {self.category!r}")
        if self.category == "other" and not (self.justification or "").strip():
            raise InvalidEdit("category 'other' requires a free-text justification")
        if not self.patch:
            raise InvalidEdit("edit carries no block patches")

    def to_payload(self) -> dict:
        return {
            "report_type": "edit-record",
            "workflow_id": self.workflow_id,
            "category": self.category,
            "patch": [
                {"block_index": p.block_index, "before": p.before, "after": p.after}
                for p in self.patch
            ],
            "author": self.author,
            "justification": self.justification,
        }


@dataclass
class ValidationRecord:
    insight_id: str
    verdict: str
    notes: str
    reviewer: str
    reason: str | None = None
    decided_at: str = ""

    def to_payload(self) -> dict:
        return {
            "insight_id": self.insight_id,
            "verdict": self.verdict,
            "reason": self.reason,
            "notes": self.notes,
            "reviewer": self.reviewer,
            "decided_at": self.decided_at or utc_now(),
        }


@dataclass
class Workbench:
    """Store-backed review operations; sandbox configuration rides along."""

    store: ArtifactStore
    sessions_root: Path = Path("sessions")
    limits: SandboxLimits = field(default_factory=SandboxLimits)
    interpreter_table: dict[str, InterpreterConfig] | None = None

    # -- lookups ------------------------------------------------------------

    def latest_insight(self, insight_id: str) -> tuple[ArtifactId, dict]:
        found = self.store.latest_where("insight", "insight_id", insight_id)
        if found is None:
            raise UnknownInsight(insight_id)
        return found

    def bundles_for(self, insight_id: str) -> list[tuple[ArtifactId, dict]]:
        return [
            (aid, payload)
            for aid, payload in self.store.get_artifacts("workflow")
            if payload["insight_id"] == insight_id
        ]

    def latest_bundle(self, insight_id: str) -> tuple[ArtifactId, dict] | None:
        bundles = self.bundles_for(insight_id)
        return bundles[-1] if bundles else None

    def latest_report(self, insight_id: str) -> tuple[ArtifactId, dict] | None:
        workflow_ids = {p["workflow_id"] for _, p in self.bundles_for(insight_id)}
        reports = [
            (aid, payload)
            for aid, payload in self.store.get_artifacts("execution-report")
            if payload["workflow_id"] in workflow_ids
        ]
        return reports[-1] if reports else None

    def latest_verdict(self, insight_id: str) -> tuple[ArtifactId, dict] | None:
        records = [
            (aid, payload)
            for aid, payload in self.store.get_artifacts("validation-record")
            if payload["insight_id"] == insight_id
        ]
        return records[-1] if records else None

    def dataset_manifest_for(self, paper_id: str) -> DatasetManifest:
        for _, payload in reversed(self.store.get_artifacts("report")):
            if payload.get("report_type") == "dataset-manifest" and payload.get("paper_id") == paper_id:
                return DatasetManifest(entries=[tuple(e) for e in payload["entries"]])
        return DatasetManifest()

    # -- operations ---------------------------------------------------------

    def execute(self, insight_id: str) -> tuple[ArtifactId, ExecutionReport]:
        """Run the insight's latest bundle against its paper's dataset and
        persist the execution report."""
        _, insight_payload = self.latest_insight(insight_id)
        found = self.latest_bundle(insight_id)
        if found is None:
            raise WorkbenchError(f"no workflow bundle for {insight_id}")
        bundle_aid, bundle_payload = found
        bundle = WorkflowBundle.from_payload(bundle_payload)
        dataset = self.dataset_manifest_for(insight_payload.get("paper_id", ""))
        report = execute_workflow(
            bundle,
            dataset,
            limits=self.limits,
            session_root=self.sessions_root,
            interpreter_table=self.interpreter_table,
        )
        report_aid = self.store.put_artifact(
            "execution-report",
            report.to_payload(),
            ProvenanceStamp(producer="execute_workflow", pipeline_stage="workflow-execution",
                            parent_ids=[bundle_aid]),
        )
        return report_aid, report

    def apply_edit(self, insight_id: str, edit: EditRecord) -> ArtifactId:
        """Apply a reviewer patch to the latest bundle; returns the new
        bundle's artifact id (old bundle becomes its parent)."""
        found = self.latest_bundle(insight_id)
        if found is None:
            raise WorkbenchError(f"no workflow bundle for {insight_id}")
        bundle_aid, payload = found
        if payload["workflow_id"] != edit.workflow_id:
            raise StaleEdit(
                f"edit targets {edit.workflow_id} but the latest bundle is {payload['workflow_id']}"
            )
        blocks = [dict(b) for b in payload["blocks"]]
        for patch in edit.patch:
            if patch.block_index < 0 or patch.block_index >= len(blocks):
                raise InvalidEdit(f"block index {patch.block_index} out of range")
            if blocks[patch.block_index]["code"] != patch.before:
                raise StaleEdit(f"before-text mismatch on block {patch.block_index}")
            blocks[patch.block_index]["code"] = patch.after

        edit_aid = self.store.put_artifact(
            "report", edit.to_payload(),
            ProvenanceStamp(producer="apply_edit", pipeline_stage="workflow-generation",
                            parent_ids=[bundle_aid]),
        )
        new_payload = dict(payload)
        new_payload["blocks"] = blocks
        new_payload["workflow_id"] = f"{payload['workflow_id']}-e{uuid.uuid4().hex[:6]}"
        return self.store.put_artifact(
            "workflow", new_payload,
            ProvenanceStamp(producer="apply_edit", pipeline_stage="workflow-generation",
                            parent_ids=[bundle_aid, edit_aid]),
        )

    def replay_edits(self, insight_id: str) -> dict:
        """Re-apply the insight's recorded edits to its original bundle;
        returns the reconstructed final payload (lineage check helper)."""
        bundles = self.bundles_for(insight_id)
        if not bundles:
            raise WorkbenchError(f"no workflow bundle for {insight_id}")
        payload = {k: v for k, v in bundles[0][1].items()}
        blocks = [dict(b) for b in payload["blocks"]]
        for _, edit in self.store.get_artifacts("report"):
            if edit.get("report_type") != "edit-record":
                continue
            if not any(edit["workflow_id"] == b[1]["workflow_id"] for b in bundles):
                continue
            for patch in edit["patch"]:
                if blocks[patch["block_index"]]["code"] != patch["before"]:
                    raise StaleEdit("replay diverged from recorded edit chain")
                blocks[patch["block_index"]]["code"] = patch["after"]
        payload["blocks"] = blocks
        return payload

    def record_verdict(
        self,
        insight_id: str,
        verdict: str,
        reason: str | None = None,
        notes: str = "",
        reviewer: str = "",
    ) -> ArtifactId:
        """Record the human verdict; transitions the insight's status."""
        insight_aid, insight_payload = self.latest_insight(insight_id)
        latest_report = self.latest_report(insight_id)
        if latest_report is None:
            raise NoExecution(f"{insight_id} has no execution report")
        report_aid, report_payload = latest_report
        if verdict == "validated":
            if any(b["status"] != "ok" for b in report_payload["blocks"]):
                raise PrematureValidate(f"latest run of {insight_id} has failing blocks")

        record = ValidationRecord(
            insight_id=insight_id, verdict=verdict, reason=reason,
            notes=notes or "", reviewer=reviewer,
        )
        parents = [insight_aid, report_aid]
        previous = self.latest_verdict(insight_id)
        if previous is not None:
            parents.append(previous[0])  # amendments supersede the old record
        record_aid = self.store.put_artifact(
            "validation-record", record.to_payload(),
            ProvenanceStamp(producer="record_verdict", pipeline_stage="insight-validation",
                            parent_ids=parents, model_id=None),
        )
        new_insight = dict(insight_payload)
        new_insight["status"] = verdict
        self.store.put_artifact(
            "insight", new_insight,
            ProvenanceStamp(producer="record_verdict", pipeline_stage="insight-validation",
                            parent_ids=[insight_aid, record_aid]),
        )
        return record_aid

    def pending_queue(self) -> list[str]:
        """Insight ids with a generated bundle and no verdict, oldest first."""
        decided = {p["insight_id"] for _, p in self.store.get_artifacts("validation-record")}
        queue: list[str] = []
        for _, payload in self.store.get_artifacts("workflow"):
            insight_id = payload["insight_id"]
            if insight_id not in decided and insight_id not in queue:
                queue.append(insight_id)
        return queue

    def insight_status(self, insight_id: str) -> str:
        return self.latest_insight(insight_id)[1]["status"]
