"""Question factory: turn validated insights into open-ended and
multiple-choice items (two per type per insight), apply the two-stage
knowledge-recall filter, assemble benchmark triplets, and derive the
tool-usage split."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .gateway import LlmGateway, ModelSpec, PromptBundle, TagMissing, TagUnclosed, extract_tagged_last
from .ingest import DatasetManifest, LITE_LIMIT_BYTES
from .insights import InsightCandidate
from .judging import JudgeError, judge_open_ended
from .store import ArtifactId, ArtifactStore, ProvenanceStamp
from . import prompts

logger = logging.getLogger(__name__)

# Answers must not name analysis tooling; lint list is configurable and
# warning-only since enforcement is heuristic.
TOOL_NAME_LINT = ["SCENIC", "differential gene expression analysis", "CellDB"]

MCQ_RULE = "discard iff both reference models select exactly the correct set"
OEQ_RULE = "discard iff both judge ratings exceed 3.0"


class QuestionError(Exception):
    pass


class FormatError(QuestionError):
    pass


class OptionLetterGap(QuestionError):
    """MCQ option letters are not consecutive from A."""


class UnknownQuestion(QuestionError):
    pass


class UnmappedInsight(QuestionError):
    """No dataset manifest exists for the insight's paper."""


class NotValidated(QuestionError):
    pass


# ---------------------------------------------------------------------------
# Reply parsing
# ---------------------------------------------------------------------------

_LABEL_RE = re.compile(
    r"(?i)^\s*(?:\*\*)?\s*(insight|question\s*(\d+)|answer\s*(\d+))\s*(?:\*\*)?\s*:\s*(.*)$"
)
_OPTION_RE = re.compile(r"^\s*(?:\()?([A-Z])\)\s*(.*\S)\s*$")


def _walk_labeled_lines(text: str):
    """Yield ('label', n, first_line_text) or ('option', letter, text) or
    ('cont', None, line) events for the questions output format."""
    for line in text.splitlines():
        label = _LABEL_RE.match(line)
        if label:
            name = label.group(1).lower()
            if name.startswith("question"):
                yield "question", int(label.group(2)), label.group(4)
            elif name.startswith("answer"):
                yield "answer", int(label.group(3)), label.group(4)
            else:
                yield "insight", None, label.group(4)
            continue
        option = _OPTION_RE.match(line)
        if option:
            yield "option", option.group(1), option.group(2)
            continue
        yield "cont", None, line


def parse_question_reply(text: str, kind: str, expected: int = 2) -> list[dict]:
    """Parse the QuestionN/AnswerN reply format into question dicts."""
    drafts: dict[int, dict] = {}
    target: tuple[int, str] | None = None  # (question number, field)

    for event, key, value in _walk_labeled_lines(text):
        if event == "insight":
            target = None
        elif event == "question":
            n = int(key)
            # tolerate repeated QuestionN labels by assigning the next slot
            while n in drafts and "question" in drafts[n]:
                n += 1
            drafts.setdefault(n, {"options": {}})["question"] = value.strip()
            target = (n, "question")
        elif event == "answer":
            n = int(key)
            if n not in drafts:
                drafts[n] = {"options": {}}
            drafts[n]["answer"] = value.strip()
            target = (n, "answer")
        elif event == "option" and kind == "mcq" and target is not None:
            n = target[0]
            drafts[n]["options"][key] = value.strip()
        elif event == "cont" and target is not None and value.strip():
            n, fieldname = target
            drafts[n][fieldname] = (drafts[n].get(fieldname, "") + "\n" + value.strip()).strip()

    if len(drafts) != expected:
        raise FormatError(f"parsed {len(drafts)} drafts, expected {expected}")
    ordered = [drafts[k] for k in sorted(drafts)]
    for draft in ordered:
        if not draft.get("question") or not draft.get("answer"):
            raise FormatError("draft missing question or answer text")
        if kind == "mcq":
            letters = sorted(draft["options"])
            if len(letters) < 2:
                raise FormatError("mcq draft has fewer than 2 options")
            consecutive = [chr(ord("A") + i) for i in range(len(letters))]
            if letters != consecutive:
                raise OptionLetterGap(f"options {letters} not consecutive from A")
            correct = parse_letter_set(draft["answer"])
            if not correct or not correct <= set(letters):
                raise FormatError(
                    f"correct set {sorted(correct)} not a subset of options {letters}"
                )
            draft["correct"] = sorted(correct)
    return ordered


def parse_letter_set(text: str) -> set[str]:
    """'A,C' (possibly quoted or spaced) -> {'A', 'C'}."""
    cleaned = text.strip().strip('"').strip("'")
    letters = {part.strip().upper() for part in cleaned.split(",") if part.strip()}
    if not letters or not all(len(l) == 1 and l.isalpha() for l in letters):
        raise FormatError(f"unparseable option letters: {text!r}")
    return letters


def render_letter_set(letters) -> str:
    return ",".join(sorted(letters))


def lint_answer_for_tool_names(answer: str, lint_list: list[str] | None = None) -> list[str]:
    hits = [t for t in (lint_list or TOOL_NAME_LINT) if t.lower() in answer.lower()]
    for hit in hits:
        logger.warning("answer mentions analysis tooling (%s); lint is warning-only", hit)
    return hits


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_questions(
    insight: InsightCandidate,
    kind: str,
    spec: ModelSpec,
    gateway: LlmGateway,
    domain: str = prompts.DEFAULT_DOMAIN,
    allow_unvalidated: bool = False,
) -> tuple[list[dict], list[str]]:
    """Generate two drafts of the given kind from a validated insight."""
    if kind not in ("oeq", "mcq"):
        raise ValueError(f"unknown question kind {kind!r}")
    if insight.status != "validated" and not allow_unvalidated:
        raise NotValidated(f"insight {insight.insight_id} is {insight.status}, not validated")

    template = prompts.OEQ_GENERATION_TEMPLATE if kind == "oeq" else prompts.MCQ_GENERATION_TEMPLATE
    prompt = PromptBundle(user_turns=[template.format(
        domain=domain,
        summary=insight.summary,
        derivation=insight.derivation,
        grounding_text=insight.grounding_text,
    )])
    completion = gateway.complete(spec, prompt)
    raws = [completion.text]
    try:
        drafts = parse_question_reply(completion.text, kind)
    except QuestionError as first_error:
        logger.warning("question parse failed (%s); one repair round", first_error)
        mcq_extra = ", lettered option lines, " if kind == "mcq" else ""
        repair = PromptBundle(user_turns=[prompts.REPAIR_QUESTIONS_TEMPLATE.format(
            mcq_extra=mcq_extra, previous=completion.text
        )])
        repaired = gateway.complete(spec, repair)
        raws.append(repaired.text)
        drafts = parse_question_reply(repaired.text, kind)

    payloads = []
    for n, draft in enumerate(drafts, start=1):
        payload = {
            "question_id": f"{insight.insight_id}-{kind}{n}",
            "insight_id": insight.insight_id,
            "kind": kind,
            "filter_status": "draft",
            "flags": [],
        }
        if kind == "oeq":
            payload["question"] = draft["question"]
            payload["answer"] = draft["answer"]
            lint_answer_for_tool_names(draft["answer"])
        else:
            payload["stem"] = draft["question"]
            payload["options"] = {k: draft["options"][k] for k in sorted(draft["options"])}
            payload["correct"] = draft["correct"]
        payloads.append(payload)
    return payloads, raws


# ---------------------------------------------------------------------------
# Two-stage filtering
# ---------------------------------------------------------------------------


def mcq_discard(first_correct: bool, second_correct: bool) -> bool:
    return first_correct and second_correct


def oeq_discard(first_rating: float | None, second_rating: float | None) -> bool:
    return (
        first_rating is not None
        and second_rating is not None
        and first_rating > 3.0
        and second_rating > 3.0
    )


def expected_decision(report: dict) -> str:
    """Mechanical re-derivation of a filter report's decision from its outcomes."""
    first, second = report["outcomes"]
    if "correct" in first:
        discarded = mcq_discard(bool(first["correct"]), bool(second["correct"]))
    else:
        discarded = oeq_discard(first.get("rating"), second.get("rating"))
    return "discarded" if discarded else "kept"


def auto_filter(
    question: dict,
    reference_specs: tuple[ModelSpec, ModelSpec],
    judge_spec: ModelSpec,
    gateway: LlmGateway,
    domain: str = prompts.DEFAULT_DOMAIN,
) -> dict:
    """Probe whether the question is solvable from pretraining knowledge
    alone: the two reference models answer from the question text only (no
    dataset access). Returns a filter-report payload."""
    if len(reference_specs) != 2:
        raise ValueError("auto_filter requires exactly two reference model specs")
    if question["filter_status"] != "draft":
        raise QuestionError(f"{question['question_id']} is not a draft")

    outcomes = []
    if question["kind"] == "mcq":
        probe = prompts.RECALL_PROBE_MCQ_TEMPLATE.format(
            stem=question["stem"], options=prompts.format_options(question["options"])
        )
        correct_set = set(question["correct"])
        for spec in reference_specs:
            completion = gateway.complete(spec, PromptBundle(user_turns=[probe]))
            try:
                selected = parse_letter_set(extract_tagged_last(completion.text, "solution"))
                is_correct = selected == correct_set
                answer = render_letter_set(selected)
            except (TagMissing, TagUnclosed, FormatError) as exc:
                logger.warning("reference model %s reply unparseable (%s); counted incorrect",
                               spec.model_id, exc)
                answer, is_correct = completion.text.strip(), False
            outcomes.append({"model_id": spec.model_id, "answer": answer, "correct": is_correct})
        discarded = mcq_discard(outcomes[0]["correct"], outcomes[1]["correct"])
        rule = MCQ_RULE
    else:
        probe = prompts.RECALL_PROBE_OEQ_TEMPLATE.format(question=question["question"])
        for spec in reference_specs:
            completion = gateway.complete(spec, PromptBundle(user_turns=[probe]))
            try:
                verdict = judge_open_ended(
                    completion.text, question["answer"], judge_spec, gateway,
                    answer_id=f"filter:{question['question_id']}:{spec.model_id}",
                    domain=domain,
                )
                rating = verdict.rating
            except JudgeError as exc:
                logger.warning("judge failed on reference answer (%s); counted low", exc)
                rating = None
            outcomes.append({
                "model_id": spec.model_id,
                "answer": completion.text.strip(),
                "rating": rating,
            })
        discarded = oeq_discard(outcomes[0]["rating"], outcomes[1]["rating"])
        rule = OEQ_RULE

    return {
        "question_id": question["question_id"],
        "outcomes": outcomes,
        "decision": "discarded" if discarded else "kept",
        "rule_applied": rule,
    }


# ---------------------------------------------------------------------------
# Status transitions and manual flags
# ---------------------------------------------------------------------------


def _supersede_question(store: ArtifactStore, old_aid: ArtifactId, payload: dict,
                        extra_parents: list[ArtifactId] = ()) -> ArtifactId:
    return store.put_artifact(
        "question", payload,
        ProvenanceStamp(producer="question-factory", pipeline_stage="question-filtering",
                        parent_ids=[old_aid, *extra_parents]),
    )


def record_filter_outcome(store: ArtifactStore, question_aid: ArtifactId,
                          report: dict) -> ArtifactId:
    """Persist the filter report and the question's new status."""
    question = store.get_payload(question_aid)
    report_aid = store.put_artifact(
        "filter-report", report,
        ProvenanceStamp(producer="auto_filter", pipeline_stage="question-filtering",
                        parent_ids=[question_aid]),
    )
    updated = dict(question)
    updated["filter_status"] = "auto-kept" if report["decision"] == "kept" else "auto-discarded"
    return _supersede_question(store, question_aid, updated, [report_aid])


def apply_manual_flags(
    store: ArtifactStore,
    question_id: str,
    flags: list[str],
    reviewer: str,
) -> dict:
    """Record manual-review flags. Any non-empty flag set excludes the
    question; a zero-flag confirmation promotes it to final."""
    found = store.latest_where("question", "question_id", question_id)
    if found is None:
        raise UnknownQuestion(question_id)
    question_aid, payload = found
    if payload["filter_status"] != "auto-kept":
        raise QuestionError(
            f"{question_id} is {payload['filter_status']}; flags apply to auto-kept questions"
        )
    updated = dict(payload)
    updated["flags"] = sorted(set(flags))
    updated["filter_status"] = "manually-flagged" if flags else "final"
    updated["reviewed_by"] = reviewer
    _supersede_question(store, question_aid, updated)
    return updated


# ---------------------------------------------------------------------------
# Benchmark assembly
# ---------------------------------------------------------------------------


def _manifests_from_store(store: ArtifactStore) -> dict[str, DatasetManifest]:
    manifests = {}
    for _, payload in store.get_artifacts("report"):
        if payload.get("report_type") == "dataset-manifest":
            manifests[payload["paper_id"]] = DatasetManifest(
                entries=[tuple(e) for e in payload["entries"]]
            )
    return manifests


def assemble_benchmark(
    store: ArtifactStore,
    manifests: dict[str, DatasetManifest] | None = None,
    lite_limit: int = LITE_LIMIT_BYTES,
) -> tuple[list[dict], dict]:
    """Build triplets from every final question; tags each with 'full' plus
    'lite' when its dataset is under the size limit. Returns (triplets,
    per-paper/per-kind counts)."""
    manifests = manifests if manifests is not None else _manifests_from_store(store)
    triplets = []
    counts: dict[str, dict[str, int]] = {}
    seen: set[str] = set()
    for question_aid, question in reversed(store.get_artifacts("question")):
        if question["question_id"] in seen:
            continue  # latest version wins
        seen.add(question["question_id"])
        if question["filter_status"] != "final":
            continue
        insight_found = store.latest_where("insight", "insight_id", question["insight_id"])
        if insight_found is None or insight_found[1]["status"] != "validated":
            raise NotValidated(f"{question['question_id']} has no validated insight")
        paper_id = insight_found[1].get("paper_id", "")
        if paper_id not in manifests:
            raise UnmappedInsight(f"no dataset manifest for paper {paper_id!r}")
        manifest = manifests[paper_id]
        tags = ["full"] + (["lite"] if manifest.total_bytes < lite_limit else [])
        answer = question["answer"] if question["kind"] == "oeq" else question["correct"]
        triplet = {
            "triplet_id": f"t-{question['question_id']}",
            "manifest": manifest.to_payload(),
            "question_id": question["question_id"],
            "kind": question["kind"],
            "question": question,
            "answer": answer,
            "split_tags": tags,
        }
        store.put_artifact(
            "triplet", triplet,
            ProvenanceStamp(producer="assemble_benchmark", pipeline_stage="benchmark-assembly",
                            parent_ids=[question_aid]),
        )
        triplets.append(triplet)
        paper_counts = counts.setdefault(paper_id, {"oeq": 0, "mcq": 0})
        paper_counts[question["kind"]] += 1
    triplets.sort(key=lambda t: t["triplet_id"])
    return triplets, counts


def derive_tool_usage_split(
    store: ArtifactStore,
    tool_reliant_insight_ids: list[str],
    spec: ModelSpec,
    gateway: LlmGateway,
    excluded_question_ids: set[str] = frozenset(),
    manifests: dict[str, DatasetManifest] | None = None,
    domain: str = prompts.DEFAULT_DOMAIN,
) -> list[dict]:
    """Tool-usage split: open-ended questions generated from manually tagged
    tool-reliant (invalidated) insights, restricted to papers that also have
    at least one validated insight; manually excluded questions are dropped.
    Empty result is valid."""
    manifests = manifests if manifests is not None else _manifests_from_store(store)
    validated_papers = {
        p.get("paper_id")
        for _, p in store.get_artifacts("insight")
        if p["status"] == "validated"
    }
    triplets = []
    for insight_id in tool_reliant_insight_ids:
        found = store.latest_where("insight", "insight_id", insight_id)
        if found is None:
            logger.warning("tool-usage candidate %s not in store; skipped", insight_id)
            continue
        insight_aid, payload = found
        if payload["status"] != "invalidated":
            logger.warning("tool-usage candidate %s is %s, not invalidated; skipped",
                           insight_id, payload["status"])
            continue
        if payload.get("paper_id") not in validated_papers:
            continue  # papers without any validated insight stay out of the pool
        insight = InsightCandidate.from_payload(payload)
        drafts, _ = generate_questions(
            insight, "oeq", spec, gateway, domain=domain, allow_unvalidated=True
        )
        for draft in drafts:
            if draft["question_id"] in excluded_question_ids:
                continue
            question_aid = store.put_artifact(
                "question", draft,
                ProvenanceStamp(producer="derive_tool_usage_split",
                                pipeline_stage="question-generation",
                                parent_ids=[insight_aid]),
            )
            manifest = manifests.get(payload.get("paper_id"), DatasetManifest())
            triplet = {
                "triplet_id": f"t-{draft['question_id']}",
                "manifest": manifest.to_payload(),
                "question_id": draft["question_id"],
                "kind": "oeq",
                "question": draft,
                "answer": draft["answer"],
                "split_tags": ["tool-usage"],
            }
            store.put_artifact(
                "triplet", triplet,
                ProvenanceStamp(producer="derive_tool_usage_split",
                                pipeline_stage="benchmark-assembly",
                                parent_ids=[question_aid]),
            )
            triplets.append(triplet)
    return triplets


def export_benchmark_jsonl(triplets: list[dict], path) -> None:
    import json
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8") as fh:
        for triplet in triplets:
            fh.write(json.dumps(triplet, ensure_ascii=False) + "\n")


def load_benchmark_jsonl(path) -> list[dict]:
    import json
    from pathlib import Path

    return [
        json.loads(line)
        for line in Path(path).read_text("utf-8").splitlines()
        if line.strip()
    ]
