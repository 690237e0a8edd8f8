"""The four LLM stages that turn a paper plus its repository into executable
candidate workflows: insight extraction, code description, code matching,
and workflow generation. Model outputs are parsed strictly, with one
automatic repair round-trip before erroring."""

from __future__ import annotations

import ast
import json
import logging
import re
import uuid
from dataclasses import dataclass, field

from .gateway import LlmGateway, ModelSpec, PromptBundle
from .ingest import PaperDocument, RepositorySnapshot, bundle_sources
from .store import ArtifactId, ArtifactStore, ProvenanceStamp
from . import prompts

logger = logging.getLogger(__name__)

MAX_MATCHED_FILES = 5
DESCRIPTION_CHAR_BUDGET = 48_000


class PipelineError(Exception):
    pass


class FormatError(PipelineError):
    pass


class CountMismatch(PipelineError):
    pass


class MissingKeys(PipelineError):
    def __init__(self, keys: list[str]):
        super().__init__(f"description map lacks paths: {keys}")
        self.keys = keys


class EmptyMatch(PipelineError):
    """No valid file paths survived matching; the insight cannot proceed."""


class MalformedJson(PipelineError):
    pass


class MalformedCode(PipelineError):
    """An execute tag was opened but never closed."""


@dataclass
class InsightCandidate:
    insight_id: str
    rank: int
    summary: str
    derivation: str
    grounding_text: str
    paper_id: str = ""
    status: str = "candidate"

    def to_payload(self) -> dict:
        return {
            "insight_id": self.insight_id,
            "paper_id": self.paper_id,
            "rank": self.rank,
            "summary": self.summary,
            "derivation": self.derivation,
            "grounding_text": self.grounding_text,
            "status": self.status,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "InsightCandidate":
        return cls(
            insight_id=p["insight_id"],
            rank=p["rank"],
            summary=p["summary"],
            derivation=p["derivation"],
            grounding_text=p["grounding_text"],
            paper_id=p.get("paper_id", ""),
            status=p["status"],
        )


@dataclass
class CodeFileDescription:
    path: str
    description: str


@dataclass
class FileMatchSet:
    insight_id: str
    paths: list[str]
    dropped: list[tuple[str, str]] = field(default_factory=list)  # (path, reason)

    def to_payload(self) -> dict:
        return {
            "insight_id": self.insight_id,
            "paths": list(self.paths),
            "dropped": [list(d) for d in self.dropped],
        }


@dataclass
class CodeBlock:
    code: str
    reasoning: str
    derived_from: list[str]


@dataclass
class WorkflowBundle:
    workflow_id: str
    insight_id: str
    blocks: list[CodeBlock]
    language_hint: str = "python"
    warnings: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "workflow_id": self.workflow_id,
            "insight_id": self.insight_id,
            "blocks": [
                {"code": b.code, "reasoning": b.reasoning, "derived_from": list(b.derived_from)}
                for b in self.blocks
            ],
            "language_hint": self.language_hint,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_payload(cls, p: dict) -> "WorkflowBundle":
        return cls(
            workflow_id=p["workflow_id"],
            insight_id=p["insight_id"],
            blocks=[
                CodeBlock(b["code"], b["reasoning"], list(b["derived_from"]))
                for b in p["blocks"]
            ],
            language_hint=p["language_hint"],
            warnings=list(p.get("warnings", [])),
        )


# ---------------------------------------------------------------------------
# Parsers
# ---------------------------------------------------------------------------

_INSIGHT_HEAD_RE = re.compile(r"(?im)^\s*(?:\*\*)?\s*insight\s*#\s*(\d+)\b.*$")
_FIELD_PATTERNS = (
    ("summary", re.compile(r"(?im)^\s*(?:\*\*|_)*\s*summary\s*(?:\*\*|_)*\s*:\s*")),
    ("derivation", re.compile(r"(?im)^\s*(?:\*\*|_)*\s*how it was derived\s*(?:\*\*|_)*\s*:\s*")),
    ("grounding_text", re.compile(r"(?im)^\s*(?:\*\*|_)*\s*relevant text paragraphs\s*(?:\*\*|_)*\s*:\s*")),
)


def parse_insight_blocks(text: str) -> list[dict]:
    """Parse 'Insight #X' blocks into dicts with rank and the three fields."""
    heads = list(_INSIGHT_HEAD_RE.finditer(text))
    if not heads:
        raise FormatError("no 'Insight #X' blocks found")
    parsed = []
    for i, head in enumerate(heads):
        seg_start = head.end()
        seg_end = heads[i + 1].start() if i + 1 < len(heads) else len(text)
        segment = text[seg_start:seg_end]

        markers = []
        for name, pattern in _FIELD_PATTERNS:
            match = pattern.search(segment)
            if match is None:
                raise FormatError(f"insight #{head.group(1)} missing field {name!r}")
            markers.append((match.start(), match.end(), name))
        markers.sort()

        fields = {}
        for j, (_, value_start, name) in enumerate(markers):
            value_end = markers[j + 1][0] if j + 1 < len(markers) else len(segment)
            value = segment[value_start:value_end].strip()
            if not value:
                raise FormatError(f"insight #{head.group(1)} has empty field {name!r}")
            fields[name] = value
        fields["rank"] = int(head.group(1))
        parsed.append(fields)
    return parsed


def _strip_code_fences(text: str) -> str:
    return re.sub(r"```[a-zA-Z]*", "", text).replace("```", "")


def json_object_from_text(text: str) -> dict:
    """Extract the first JSON object embedded anywhere in a model reply."""
    cleaned = _strip_code_fences(text)
    decoder = json.JSONDecoder()
    idx = cleaned.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(cleaned[idx:])
        except json.JSONDecodeError:
            idx = cleaned.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = cleaned.find("{", idx + 1)
    raise MalformedJson("no JSON object found in reply")


def path_list_from_text(text: str) -> list[str]:
    """Extract a list of path strings from a model reply (JSON or Python list)."""
    cleaned = _strip_code_fences(text)
    start = cleaned.find("[")
    end = cleaned.rfind("]")
    if start == -1 or end <= start:
        raise FormatError("no list found in reply")
    literal = cleaned[start:end + 1]
    try:
        value = json.loads(literal)
    except json.JSONDecodeError:
        try:
            value = ast.literal_eval(literal)
        except (ValueError, SyntaxError) as exc:
            raise FormatError(f"unparseable path list: {exc}") from exc
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise FormatError("reply list is not a list of strings")
    return value


_EXECUTE_OPEN = "<execute>"
_EXECUTE_CLOSE = "</execute>"


def extract_execute_code(raw: str) -> str:
    start = raw.find(_EXECUTE_OPEN)
    if start == -1:
        raise MalformedCode("code value lacks an <execute> tag")
    end = raw.find(_EXECUTE_CLOSE, start)
    if end == -1:
        raise MalformedCode("<execute> tag opened but not closed")
    return raw[start + len(_EXECUTE_OPEN):end].strip()


def count_execute_pairs(text: str) -> int:
    return len(re.findall(r"<execute>.*?</execute>", text, flags=re.DOTALL))


# ---------------------------------------------------------------------------
# LLM stages
# ---------------------------------------------------------------------------


def extract_insights(
    paper: PaperDocument,
    spec: ModelSpec,
    gateway: LlmGateway,
    count: int = 10,
    domain: str = prompts.DEFAULT_DOMAIN,
) -> tuple[list[InsightCandidate], list[str]]:
    """Extract `count` ranked insights from the paper.

    Returns (candidates, raw completion texts); raws are kept for audit.
    """
    prompt = PromptBundle(
        system=prompts.INSIGHT_EXTRACTOR_SYSTEM,
        user_turns=[prompts.INSIGHT_EXTRACTOR_TEMPLATE.format(
            domain=domain, count=count, paper_text=paper.prioritized_text()
        )],
    )
    completion = gateway.complete(spec, prompt)
    raws = [completion.text]

    def attempt(text: str) -> list[dict]:
        blocks = parse_insight_blocks(text)
        if len(blocks) != count:
            raise CountMismatch(f"parsed {len(blocks)} insights, requested {count}")
        ranks = [b["rank"] for b in blocks]
        if sorted(ranks) != list(range(1, count + 1)):
            raise FormatError(f"ranks {ranks} are not 1..{count}")
        return blocks

    try:
        blocks = attempt(completion.text)
    except PipelineError as first_error:
        logger.warning("insight parse failed (%s); attempting one repair round", first_error)
        repair = PromptBundle(
            system=prompts.INSIGHT_EXTRACTOR_SYSTEM,
            user_turns=[prompts.REPAIR_INSIGHTS_TEMPLATE.format(
                count=count, previous=completion.text
            )],
        )
        repaired = gateway.complete(spec, repair)
        raws.append(repaired.text)
        blocks = attempt(repaired.text)  # raises FormatError / CountMismatch if still bad

    candidates = [
        InsightCandidate(
            insight_id=f"{paper.paper_id}-i{b['rank']}",
            rank=b["rank"],
            summary=b["summary"],
            derivation=b["derivation"],
            grounding_text=b["grounding_text"],
            paper_id=paper.paper_id,
        )
        for b in sorted(blocks, key=lambda b: b["rank"])
    ]
    return candidates, raws


def _description_batches(snapshot: RepositorySnapshot, batch: list[str], char_budget: int) -> list[list[str]]:
    batches: list[list[str]] = []
    current: list[str] = []
    used = 0
    for path in batch:
        size = len(snapshot.content_of(path)) + len(path) + 64
        if current and used + size > char_budget:
            batches.append(current)
            current, used = [], 0
        current.append(path)
        used += size
    if current:
        batches.append(current)
    return batches


def describe_files(
    snapshot: RepositorySnapshot,
    batch: list[str],
    spec: ModelSpec,
    gateway: LlmGateway,
    char_budget: int = DESCRIPTION_CHAR_BUDGET,
) -> tuple[list[CodeFileDescription], list[str]]:
    """Describe each file in `batch`; result covers exactly the batch paths."""
    known = set(snapshot.paths())
    unknown = [p for p in batch if p not in known]
    if unknown:
        raise PipelineError(f"batch paths not in snapshot: {unknown}")

    descriptions: dict[str, str] = {}
    raws: list[str] = []
    for sub_batch in _description_batches(snapshot, batch, char_budget):
        bundle_text = bundle_sources(snapshot, sub_batch)
        prompt = PromptBundle(
            system=prompts.CODE_DESCRIBER_SYSTEM,
            user_turns=[prompts.CODE_DESCRIBER_TEMPLATE.format(
                n=len(sub_batch), bundle=bundle_text
            )],
        )
        completion = gateway.complete(spec, prompt)
        raws.append(completion.text)
        try:
            mapping = json_object_from_text(completion.text)
            missing = [p for p in sub_batch if p not in mapping]
            if missing:
                raise MissingKeys(missing)
        except PipelineError:
            repair = PromptBundle(
                system=prompts.CODE_DESCRIBER_SYSTEM,
                user_turns=[prompts.REPAIR_DESCRIPTIONS_TEMPLATE.format(
                    paths=json.dumps(sub_batch), previous=completion.text
                )],
            )
            repaired = gateway.complete(spec, repair)
            raws.append(repaired.text)
            mapping = json_object_from_text(repaired.text)
            missing = [p for p in sub_batch if p not in mapping]
            if missing:
                raise MissingKeys(missing)

        extra = [k for k in mapping if k not in sub_batch]
        if extra:
            logger.warning("describer returned %d extra keys; dropping %s", len(extra), extra)
        descriptions.update({p: str(mapping[p]) for p in sub_batch})

    return [CodeFileDescription(p, descriptions[p]) for p in batch], raws


def match_files(
    insight: InsightCandidate,
    descriptions: list[CodeFileDescription],
    spec: ModelSpec,
    gateway: LlmGateway,
) -> tuple[FileMatchSet, list[str]]:
    """Link the insight to up to 5 existing files via their descriptions."""
    if not descriptions:
        raise PipelineError("descriptions must be non-empty")
    known = {d.path for d in descriptions}
    listing = "\n".join(f"- {d.path}: {d.description}" for d in descriptions)
    prompt = PromptBundle(
        system=prompts.CODE_MATCHER_SYSTEM,
        user_turns=[prompts.CODE_MATCHER_TEMPLATE.format(
            summary=insight.summary,
            derivation=insight.derivation,
            grounding_text=insight.grounding_text,
            descriptions=listing,
        )],
    )
    completion = gateway.complete(spec, prompt)
    raws = [completion.text]

    def parse(text: str) -> list[str]:
        seen = set()
        ordered = []
        for p in path_list_from_text(text):
            if p not in seen:
                seen.add(p)
                ordered.append(p)
        return ordered

    try:
        proposed = parse(completion.text)
        needs_repair = len(proposed) > MAX_MATCHED_FILES or not any(p in known for p in proposed)
    except FormatError:
        proposed, needs_repair = [], True

    if needs_repair:
        repair = PromptBundle(
            system=prompts.CODE_MATCHER_SYSTEM,
            user_turns=[prompts.REPAIR_MATCH_TEMPLATE.format(previous=completion.text)],
        )
        repaired = gateway.complete(spec, repair)
        raws.append(repaired.text)
        try:
            proposed = parse(repaired.text)
        except FormatError as exc:
            raise EmptyMatch(f"no parseable match list for {insight.insight_id}: {exc}") from exc

    dropped = [(p, "nonexistent") for p in proposed if p not in known]
    kept = [p for p in proposed if p in known]
    if len(kept) > MAX_MATCHED_FILES:
        logger.warning(
            "matcher returned %d paths for %s; clamping to first %d",
            len(kept), insight.insight_id, MAX_MATCHED_FILES,
        )
        dropped.extend((p, "over-cardinality") for p in kept[MAX_MATCHED_FILES:])
        kept = kept[:MAX_MATCHED_FILES]
    if not kept:
        raise EmptyMatch(f"zero valid paths for {insight.insight_id}")
    return FileMatchSet(insight_id=insight.insight_id, paths=kept, dropped=dropped), raws


def generate_workflow(
    insight: InsightCandidate,
    matched: FileMatchSet,
    snapshot: RepositorySnapshot,
    spec: ModelSpec,
    gateway: LlmGateway,
    language_hint: str = "python",
) -> tuple[WorkflowBundle, list[str]]:
    """Compose matched scripts into an executable multi-step workflow."""
    if not matched.paths:
        raise PipelineError("matched set must be non-empty")
    file_contents = json.dumps(
        {p: snapshot.content_of(p) for p in matched.paths}, ensure_ascii=False, indent=2
    )
    prompt = PromptBundle(
        system=prompts.CODE_GENERATOR_SYSTEM,
        user_turns=[prompts.CODE_GENERATOR_TEMPLATE.format(
            language=language_hint,
            summary=insight.summary,
            derivation=insight.derivation,
            grounding_text=insight.grounding_text,
            file_contents=file_contents,
            tree=snapshot.tree_rendering,
        )],
    )
    completion = gateway.complete(spec, prompt)
    raws = [completion.text]

    def parse(text: str) -> list[dict]:
        obj = json_object_from_text(text)
        blocks = obj.get("code_blocks")
        if blocks is None:
            # tolerate one level of nesting around the payload
            for value in obj.values():
                if isinstance(value, dict) and "code_blocks" in value:
                    blocks = value["code_blocks"]
                    break
        if not isinstance(blocks, list) or not blocks:
            raise MalformedJson("reply lacks a non-empty code_blocks list")
        for block in blocks:
            if not isinstance(block, dict) or "code" not in block:
                raise MalformedJson("code block entries need a code field")
        return blocks

    try:
        raw_blocks = parse(completion.text)
    except MalformedJson:
        repair = PromptBundle(
            system=prompts.CODE_GENERATOR_SYSTEM,
            user_turns=[prompts.REPAIR_WORKFLOW_TEMPLATE.format(previous=completion.text)],
        )
        repaired = gateway.complete(spec, repair)
        raws.append(repaired.text)
        raw_blocks = parse(repaired.text)

    known = set(snapshot.paths())
    warnings: list[str] = []
    blocks: list[CodeBlock] = []
    for i, raw_block in enumerate(raw_blocks):
        code = extract_execute_code(str(raw_block["code"]))  # MalformedCode on unclosed tag
        derived = [str(p) for p in raw_block.get("derived_from", [])]
        for path in derived:
            if path not in known:
                warnings.append(f"block {i}: derived-from path outside snapshot: {path}")
        blocks.append(CodeBlock(
            code=code,
            reasoning=str(raw_block.get("reasoning", "")),
            derived_from=derived,
        ))
    if warnings:
        for w in warnings:
            logger.warning("%s: %s", insight.insight_id, w)

    bundle = WorkflowBundle(
        workflow_id=f"{insight.insight_id}-w{uuid.uuid5(uuid.NAMESPACE_OID, file_contents).hex[:8]}",
        insight_id=insight.insight_id,
        blocks=blocks,
        language_hint=language_hint,
        warnings=warnings,
    )
    return bundle, raws


# ---------------------------------------------------------------------------
# Full stage with persistence
# ---------------------------------------------------------------------------


@dataclass
class SpecSet:
    """Model assignment: one spec for extraction, one for the code modules."""

    extractor: ModelSpec
    coder: ModelSpec


@dataclass
class StageResult:
    insight: InsightCandidate
    insight_artifact: ArtifactId
    bundle: WorkflowBundle | None = None
    bundle_artifact: ArtifactId | None = None
    failure: str | None = None


def _put_raw(store: ArtifactStore, stage: str, text: str, parents: list[ArtifactId],
             model_id: str) -> ArtifactId:
    return store.put_artifact(
        "report",
        {"report_type": "raw-completion", "stage": stage, "text": text},
        ProvenanceStamp(producer="llm-completion", pipeline_stage=stage,
                        parent_ids=parents, model_id=model_id),
    )


def run_insight_stage(
    paper: PaperDocument,
    snapshot: RepositorySnapshot,
    specs: SpecSet,
    gateway: LlmGateway,
    store: ArtifactStore,
    count: int = 10,
    domain: str = prompts.DEFAULT_DOMAIN,
) -> list[StageResult]:
    """Chain extract -> describe -> match -> generate, persisting every
    intermediate artifact with provenance. Per-insight failures become
    failure records instead of aborting the run."""
    paper_aid = store.put_artifact(
        "paper", paper.to_payload(),
        ProvenanceStamp(producer="load_paper", pipeline_stage="ingest"),
    )
    snapshot_aid = store.put_artifact(
        "repo-snapshot", snapshot.to_payload(),
        ProvenanceStamp(producer="snapshot_repository", pipeline_stage="ingest"),
    )

    candidates, extract_raws = extract_insights(paper, specs.extractor, gateway, count, domain)
    raw_parents = [
        _put_raw(store, "insight-extraction", r, [paper_aid], specs.extractor.model_id)
        for r in extract_raws
    ]
    insight_aids = [
        store.put_artifact(
            "insight", c.to_payload(),
            ProvenanceStamp(producer="extract_insights", pipeline_stage="insight-extraction",
                            parent_ids=[paper_aid] + raw_parents, model_id=specs.extractor.model_id),
        )
        for c in candidates
    ]

    descriptions, describe_raws = describe_files(snapshot, snapshot.paths(), specs.coder, gateway)
    describe_raw_aids = [
        _put_raw(store, "code-description", r, [snapshot_aid], specs.coder.model_id)
        for r in describe_raws
    ]
    descriptions_aid = store.put_artifact(
        "file-descriptions",
        {"repo_id": snapshot.repo_id, "descriptions": {d.path: d.description for d in descriptions}},
        ProvenanceStamp(producer="describe_files", pipeline_stage="code-description",
                        parent_ids=[snapshot_aid] + describe_raw_aids, model_id=specs.coder.model_id),
    )

    results: list[StageResult] = []
    for candidate, insight_aid in zip(candidates, insight_aids):
        result = StageResult(insight=candidate, insight_artifact=insight_aid)
        try:
            match, match_raws = match_files(candidate, descriptions, specs.coder, gateway)
            match_raw_aids = [
                _put_raw(store, "code-matching", r, [insight_aid, descriptions_aid],
                         specs.coder.model_id)
                for r in match_raws
            ]
            match_aid = store.put_artifact(
                "match-set", match.to_payload(),
                ProvenanceStamp(producer="match_files", pipeline_stage="code-matching",
                                parent_ids=[insight_aid, descriptions_aid] + match_raw_aids,
                                model_id=specs.coder.model_id),
            )
            bundle, gen_raws = generate_workflow(candidate, match, snapshot, specs.coder, gateway)
            gen_raw_aids = [
                _put_raw(store, "workflow-generation", r, [match_aid], specs.coder.model_id)
                for r in gen_raws
            ]
            bundle_aid = store.put_artifact(
                "workflow", bundle.to_payload(),
                ProvenanceStamp(producer="generate_workflow", pipeline_stage="workflow-generation",
                                parent_ids=[match_aid] + gen_raw_aids, model_id=specs.coder.model_id),
            )
            result.bundle = bundle
            result.bundle_artifact = bundle_aid
        except PipelineError as exc:
            logger.warning("insight %s failed: %s", candidate.insight_id, exc)
            result.failure = f"{type(exc).__name__}: {exc}"
            store.put_artifact(
                "report",
                {"report_type": "insight-failure", "insight_id": candidate.insight_id,
                 "error": result.failure},
                ProvenanceStamp(producer="run_insight_stage", pipeline_stage="workflow-generation",
                                parent_ids=[insight_aid]),
            )
        results.append(result)
    return results
