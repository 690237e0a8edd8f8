"""Content-addressed, append-only artifact store with provenance lineage.

Every pipeline stage reads its inputs from and writes its outputs to this
store, so any stage can be re-run or audited. Artifacts are immutable once
written; "updates" are new artifacts that carry the superseded artifact in
their parent list.

On-disk layout (all JSON, diffable):

    <root>/manifest.json          pins the hash algorithm for this store
    <root>/index.jsonl            one line per artifact (id, kind, stamp)
    <root>/<kind>/<digest>.json   payload + provenance, named by digest
    <root>/cache/                 completion cache (managed by the gateway)
"""

from __future__ import annotations

import datetime as _dt
import json
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

logger = logging.getLogger(__name__)

ARTIFACT_KINDS = (
    "paper",
    "repo-snapshot",
    "insight",
    "file-descriptions",
    "match-set",
    "workflow",
    "execution-report",
    "validation-record",
    "question",
    "filter-report",
    "triplet",
    "transcript",
    "verdict",
    "report",
)

# Stage order along any parent chain is monotone: an artifact may not claim
# a parent from a later stage.
PIPELINE_STAGES = (
    "ingest",
    "insight-extraction",
    "code-description",
    "code-matching",
    "workflow-generation",
    "workflow-execution",
    "insight-validation",
    "question-generation",
    "question-filtering",
    "benchmark-assembly",
    "agent-run",
    "answer-judging",
    "reporting",
)

_STAGE_INDEX = {name: i for i, name in enumerate(PIPELINE_STAGES)}


class StoreError(Exception):
    pass


class SchemaViolation(StoreError):
    pass


class MissingParent(StoreError):
    pass


class UnknownArtifact(StoreError):
    pass


@dataclass(frozen=True)
class ArtifactId:
    """Digest of the canonical payload serialization, qualified by kind."""

    kind: str
    digest: str

    def __str__(self) -> str:
        return f"{self.kind}:{self.digest}"

    @classmethod
    def parse(cls, text: str) -> "ArtifactId":
        kind, _, digest = text.partition(":")
        if not digest or kind not in ARTIFACT_KINDS:
            raise UnknownArtifact(f"not a valid artifact id: {text!r}")
        return cls(kind=kind, digest=digest)


@dataclass
class ProvenanceStamp:
    producer: str
    pipeline_stage: str
    parent_ids: list[ArtifactId] = field(default_factory=list)
    model_id: str | None = None
    created_at: str | None = None  # UTC ISO-8601; stamped at put() when None

    def to_dict(self) -> dict:
        return {
            "created_at": self.created_at,
            "producer": self.producer,
            "model_id": self.model_id,
            "parent_ids": [str(p) for p in self.parent_ids],
            "pipeline_stage": self.pipeline_stage,
        }


def utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="microseconds")


def canonical_bytes(payload) -> bytes:
    """Serialize a payload so equal values always hash to equal digests."""
    return json.dumps(
        payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")
    ).encode("utf-8")


# ---------------------------------------------------------------------------
# Per-kind payload schemas. Deliberately lightweight: required keys plus the
# handful of value constraints the rest of the pipeline relies on.
# ---------------------------------------------------------------------------

_VALIDATION_REASONS = (
    "insufficient-dataset-info",
    "workflow-dataset-inconsistency",
    "overly-generic",
    "other",
)
_FILTER_STATUSES = ("draft", "auto-kept", "auto-discarded", "manually-flagged", "final")
_QUESTION_FLAGS = ("hallucination", "duplicate", "non-validated-part")
_SPLIT_TAGS = ("full", "lite", "tool-usage")
_BLOCK_STATUSES = ("ok", "error", "timeout", "not-run")


def _require(payload: dict, keys: tuple[str, ...], kind: str) -> None:
    for key in keys:
        if key not in payload:
            raise SchemaViolation(f"{kind} payload missing field {key!r}")


def _nonempty(payload: dict, keys: tuple[str, ...], kind: str) -> None:
    for key in keys:
        value = payload.get(key)
        if not isinstance(value, str) or not value.strip():
            raise SchemaViolation(f"{kind} payload field {key!r} must be non-empty text")


def _check_paper(p: dict) -> None:
    _require(p, ("paper_id", "sections", "priority_order"), "paper")


def _check_repo_snapshot(p: dict) -> None:
    _require(p, ("repo_id", "files", "tree_rendering"), "repo-snapshot")


def _check_insight(p: dict) -> None:
    _require(p, ("insight_id", "rank", "summary", "derivation", "grounding_text", "status"), "insight")
    _nonempty(p, ("summary", "derivation", "grounding_text"), "insight")
    if p["status"] not in ("candidate", "validated", "invalidated"):
        raise SchemaViolation(f"insight status {p['status']!r} not recognized")


def _check_file_descriptions(p: dict) -> None:
    _require(p, ("repo_id", "descriptions"), "file-descriptions")
    if not isinstance(p["descriptions"], dict):
        raise SchemaViolation("file-descriptions descriptions must be a path->text map")


def _check_match_set(p: dict) -> None:
    _require(p, ("insight_id", "paths", "dropped"), "match-set")
    paths = p["paths"]
    if len(paths) > 5:
        raise SchemaViolation("match-set holds more than 5 paths")
    if len(set(paths)) != len(paths):
        raise SchemaViolation("match-set paths contain duplicates")


def _check_workflow(p: dict) -> None:
    _require(p, ("workflow_id", "insight_id", "blocks", "language_hint"), "workflow")
    if not p["blocks"]:
        raise SchemaViolation("workflow has no code blocks")
    for block in p["blocks"]:
        _require(block, ("code", "reasoning", "derived_from"), "workflow block")


def _check_execution_report(p: dict) -> None:
    _require(p, ("workflow_id", "blocks", "total_wall_clock"), "execution-report")
    for block in p["blocks"]:
        if block.get("status") not in _BLOCK_STATUSES:
            raise SchemaViolation(f"execution-report block status {block.get('status')!r} invalid")


def _check_validation_record(p: dict) -> None:
    _require(p, ("insight_id", "verdict", "notes", "reviewer", "decided_at"), "validation-record")
    if p["verdict"] not in ("validated", "invalidated"):
        raise SchemaViolation(f"validation verdict {p['verdict']!r} invalid")
    if p["verdict"] == "invalidated":
        if p.get("reason") not in _VALIDATION_REASONS:
            raise SchemaViolation("invalidated verdict requires a recognized reason")


def _check_question(p: dict) -> None:
    _require(p, ("question_id", "insight_id", "kind", "filter_status", "flags"), "question")
    if p["filter_status"] not in _FILTER_STATUSES:
        raise SchemaViolation(f"question filter_status {p['filter_status']!r} invalid")
    for flag in p["flags"]:
        if flag not in _QUESTION_FLAGS:
            raise SchemaViolation(f"question flag {flag!r} invalid")
    if p["kind"] == "oeq":
        _nonempty(p, ("question", "answer"), "question")
    elif p["kind"] == "mcq":
        _require(p, ("stem", "options", "correct"), "question")
        letters = list(p["options"])
        expected = [chr(ord("A") + i) for i in range(len(letters))]
        if len(letters) < 2 or letters != expected:
            raise SchemaViolation("mcq options must use consecutive letters from A")
        if not p["correct"] or not set(p["correct"]) <= set(letters):
            raise SchemaViolation("mcq correct set must be a non-empty subset of the options")
    else:
        raise SchemaViolation(f"question kind {p['kind']!r} invalid")


def _check_filter_report(p: dict) -> None:
    _require(p, ("question_id", "outcomes", "decision", "rule_applied"), "filter-report")
    if len(p["outcomes"]) != 2:
        raise SchemaViolation("filter-report requires exactly two reference-model outcomes")
    if p["decision"] not in ("kept", "discarded"):
        raise SchemaViolation(f"filter decision {p['decision']!r} invalid")


def _check_triplet(p: dict) -> None:
    _require(p, ("triplet_id", "manifest", "question_id", "kind", "answer", "split_tags"), "triplet")
    _require(p["manifest"], ("entries", "total_bytes"), "triplet manifest")
    for tag in p["split_tags"]:
        if tag not in _SPLIT_TAGS:
            raise SchemaViolation(f"split tag {tag!r} invalid")


def _check_transcript(p: dict) -> None:
    _require(p, ("triplet_id", "run_index", "events", "usage"), "transcript")


def _check_verdict(p: dict) -> None:
    _require(p, ("answer_id", "judge_model_id", "rating", "raw_completion"), "verdict")
    if p["rating"] not in (1, 2, 3, 4, 5):
        raise SchemaViolation(f"verdict rating {p['rating']!r} outside 1..5")


def _check_report(p: dict) -> None:
    _require(p, ("report_type",), "report")


_SCHEMA_CHECKS = {
    "paper": _check_paper,
    "repo-snapshot": _check_repo_snapshot,
    "insight": _check_insight,
    "file-descriptions": _check_file_descriptions,
    "match-set": _check_match_set,
    "workflow": _check_workflow,
    "execution-report": _check_execution_report,
    "validation-record": _check_validation_record,
    "question": _check_question,
    "filter-report": _check_filter_report,
    "triplet": _check_triplet,
    "transcript": _check_transcript,
    "verdict": _check_verdict,
    "report": _check_report,
}


class ArtifactStore:
    """Filesystem-backed store: one directory per kind, one file per artifact.

    Concurrent readers need no coordination (artifacts are immutable); all
    writes serialize through a single file lock.
    """

    def __init__(self, root: str | Path, hash_name: str = "sha256"):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._manifest_path = self.root / "manifest.json"
        self._index_path = self.root / "index.jsonl"
        self._lock = FileLock(str(self.root / ".lock"))
        if self._manifest_path.exists():
            manifest = json.loads(self._manifest_path.read_text("utf-8"))
            self.hash_name = manifest["hash"]
        else:
            hashlib.new(hash_name)  # fail fast on unknown algorithms
            self.hash_name = hash_name
            with self._lock:
                if not self._manifest_path.exists():
                    self._manifest_path.write_text(
                        json.dumps({"hash": hash_name, "version": 1}, indent=2) + "\n",
                        "utf-8",
                    )

    # -- core operations ----------------------------------------------------

    def digest_of(self, payload) -> str:
        h = hashlib.new(self.hash_name)
        h.update(canonical_bytes(payload))
        return h.hexdigest()

    def put_artifact(self, kind: str, payload: dict, provenance: ProvenanceStamp) -> ArtifactId:
        if kind not in ARTIFACT_KINDS:
            raise SchemaViolation(f"unknown artifact kind {kind!r}")
        _SCHEMA_CHECKS[kind](payload)
        if provenance.pipeline_stage not in _STAGE_INDEX:
            raise SchemaViolation(f"unknown pipeline stage {provenance.pipeline_stage!r}")

        index = self._load_index()
        child_stage = _STAGE_INDEX[provenance.pipeline_stage]
        for parent in provenance.parent_ids:
            row = index.get(str(parent))
            if row is None:
                raise MissingParent(f"parent {parent} not in store")
            if _STAGE_INDEX[row["stage"]] > child_stage:
                raise SchemaViolation(
                    f"stage {provenance.pipeline_stage!r} may not depend on "
                    f"later-stage parent {parent} ({row['stage']!r})"
                )

        artifact_id = ArtifactId(kind=kind, digest=self.digest_of(payload))
        path = self._artifact_path(artifact_id)
        if path.exists():
            return artifact_id  # content-addressed: identical payload, no duplicate

        stamp = provenance.to_dict()
        if stamp["created_at"] is None:
            stamp["created_at"] = utc_now()
        record = {"id": str(artifact_id), "kind": kind, "payload": payload, "provenance": stamp}
        with self._lock:
            if path.exists():
                return artifact_id
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(record, ensure_ascii=False, indent=2) + "\n", "utf-8")
            tmp.rename(path)
            with self._index_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "id": str(artifact_id),
                    "kind": kind,
                    "created_at": stamp["created_at"],
                    "producer": stamp["producer"],
                    "stage": stamp["pipeline_stage"],
                    "parents": stamp["parent_ids"],
                }, ensure_ascii=False) + "\n")
        return artifact_id

    def get_payload(self, artifact_id: ArtifactId) -> dict:
        return self._read_record(artifact_id)["payload"]

    def get_provenance(self, artifact_id: ArtifactId) -> dict:
        return self._read_record(artifact_id)["provenance"]

    def get_artifacts(
        self,
        kind: str,
        stage_filter: str | None = None,
        parent: ArtifactId | None = None,
    ) -> list[tuple[ArtifactId, dict]]:
        """All stored artifacts matching the filters, ordered by created-at then id."""
        rows = [r for r in self._load_index().values() if r["kind"] == kind]
        if stage_filter is not None:
            rows = [r for r in rows if r["stage"] == stage_filter]
        if parent is not None:
            rows = [r for r in rows if str(parent) in r["parents"]]
        rows.sort(key=lambda r: (r["created_at"], r["id"]))
        return [(ArtifactId.parse(r["id"]), self.get_payload(ArtifactId.parse(r["id"]))) for r in rows]

    def exists(self, artifact_id: ArtifactId) -> bool:
        return self._artifact_path(artifact_id).exists()

    def verify(self) -> list[str]:
        """Re-hash every payload; return the ids whose digest no longer matches."""
        mismatches = []
        for row in self._load_index().values():
            artifact_id = ArtifactId.parse(row["id"])
            payload = self.get_payload(artifact_id)
            if self.digest_of(payload) != artifact_id.digest:
                mismatches.append(row["id"])
        return mismatches

    # -- lineage helpers ----------------------------------------------------

    def parents_of(self, artifact_id: ArtifactId) -> list[ArtifactId]:
        row = self._load_index().get(str(artifact_id))
        if row is None:
            raise UnknownArtifact(str(artifact_id))
        return [ArtifactId.parse(p) for p in row["parents"]]

    def children_of(self, artifact_id: ArtifactId, kind: str | None = None) -> list[ArtifactId]:
        wanted = str(artifact_id)
        out = []
        for row in self._load_index().values():
            if wanted in row["parents"] and (kind is None or row["kind"] == kind):
                out.append((row["created_at"], row["id"]))
        return [ArtifactId.parse(i) for _, i in sorted(out)]

    def latest_where(self, kind: str, key: str, value) -> tuple[ArtifactId, dict] | None:
        """Newest artifact of `kind` whose payload has payload[key] == value."""
        matches = [
            (aid, payload)
            for aid, payload in self.get_artifacts(kind)
            if payload.get(key) == value
        ]
        return matches[-1] if matches else None

    # -- internals ----------------------------------------------------------

    def _artifact_path(self, artifact_id: ArtifactId) -> Path:
        return self.root / artifact_id.kind / f"{artifact_id.digest}.json"

    def _read_record(self, artifact_id: ArtifactId) -> dict:
        path = self._artifact_path(artifact_id)
        if not path.exists():
            raise UnknownArtifact(str(artifact_id))
        return json.loads(path.read_text("utf-8"))

    def _load_index(self) -> dict[str, dict]:
        index: dict[str, dict] = {}
        if not self._index_path.exists():
            return index
        with self._index_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("skipping malformed index line in %s", self._index_path)
                    continue
                index[row["id"]] = row
        return index
