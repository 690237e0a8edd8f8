"""End-to-end fake-model pipeline used by the acceptance suite: toy corpus
on disk, every stage from ingestion to judged agent answers, all through
scripted providers."""

from __future__ import annotations

import json
from pathlib import Path

from benchsmith.agent import AgentConfig, run_benchmark
from benchsmith.fakes import ScriptedProvider
from benchsmith.gateway import LlmGateway, ModelSpec
from benchsmith.ingest import build_dataset_manifest, load_paper, snapshot_repository
from benchsmith.insights import SpecSet, run_insight_stage
from benchsmith.judging import judge_open_ended
from benchsmith.metrics import macro_average_mcq, score_mcq
from benchsmith.questions import (
    apply_manual_flags,
    assemble_benchmark,
    auto_filter,
    generate_questions,
    record_filter_outcome,
)
from benchsmith.sandbox import SandboxLimits
from benchsmith.store import ArtifactStore, ProvenanceStamp
from benchsmith.workbench import Workbench

import pipeline_fakes

SPEC = ModelSpec(provider="fake", model_id="fake-model")
REFS = (
    ModelSpec(provider="fake", model_id="ref-a"),
    ModelSpec(provider="fake", model_id="ref-b"),
)
JUDGE = ModelSpec(provider="fake", model_id="fake-judge")

FAST_LIMITS = SandboxLimits(per_block_seconds=20, total_seconds=120)


def agent_planner_reply(spec, text: str) -> str:
    if "out of steps" in text or "did not contain <solution>" in text:
        return "<solution>A,C</solution>"
    if "[your previous reply]" not in text:
        return "<plan>1. inspect the dataset\n2. compute the comparison\n3. answer</plan>"
    if text.count("[execution feedback]") < 1:
        return "<execute>print('inspecting')</execute>"
    if "Answer Choices" in text:
        return "<solution>A,C</solution>"
    return "<solution>The studied population expands in treated samples.</solution>"


def full_stack_rules() -> list[tuple[str, object]]:
    """Every LLM surface in one scripted provider: judge, recall probes,
    the four pipeline stages, question generation, and the agent planner."""
    return [
        ("grading a PhD student's answer", "<rating>2</rating>"),
        ("did not contain a parseable rating", "<rating>2</rating>"),
        ("from your own knowledge", "<solution>D</solution>"),
        ("conceptual alignment", "<rating>3</rating>"),
        *pipeline_fakes.default_pipeline_rules(),
        ("research analysis agent", agent_planner_reply),
    ]


def build_corpus(root: Path) -> dict:
    """Toy paper, three-file repo, and a small dataset on disk."""
    root.mkdir(parents=True, exist_ok=True)
    paper = root / "paper.md"
    paper.write_text(
        "# Abstract\nWe profile a tissue across two conditions.\n"
        "# Results\nThe studied population expands under treatment.\n"
        "# Methods\nStandard processing and comparison.\n"
    )
    repo = root / "repo"
    (repo / "analysis").mkdir(parents=True, exist_ok=True)
    (repo / "analysis" / "load_data.py").write_text("def load():\n    return 'data'\n")
    (repo / "analysis" / "compare.py").write_text("def compare(a, b):\n    return a != b\n")
    (repo / "plot.py").write_text("def plot(x):\n    print(x)\n")
    data = root / "counts.csv"
    data.write_text("gene,control,treated\nG1,5,9\nG2,4,4\n")
    return {"paper": paper, "repo": repo, "data": data}


def run_full_fake_pipeline(workdir: Path, insight_count: int = 10,
                           agent_triplets: int = 2) -> dict:
    """Run every stage against the toy corpus; returns handles for assertions."""
    corpus = build_corpus(workdir / "corpus")
    store = ArtifactStore(workdir / "store")
    provider = ScriptedProvider(full_stack_rules())
    gateway = LlmGateway({"fake": provider}, cache_dir=workdir / "store" / "cache",
                         sleep_fn=lambda s: None)

    paper = load_paper(corpus["paper"])
    snapshot = snapshot_repository(corpus["repo"])
    paper_aid = store.put_artifact(
        "paper", paper.to_payload(),
        ProvenanceStamp(producer="load_paper", pipeline_stage="ingest"),
    )
    manifest = build_dataset_manifest([(str(corpus["data"]), "toy counts table")])
    manifest_payload = {"report_type": "dataset-manifest", "paper_id": paper.paper_id}
    manifest_payload.update(manifest.to_payload())
    store.put_artifact(
        "report", manifest_payload,
        ProvenanceStamp(producer="build_dataset_manifest", pipeline_stage="ingest",
                        parent_ids=[paper_aid]),
    )

    results = run_insight_stage(paper, snapshot, SpecSet(SPEC, SPEC), gateway, store,
                                count=insight_count)

    bench = Workbench(store=store, sessions_root=workdir / "sessions", limits=FAST_LIMITS)
    for result in results:
        if result.bundle is None:
            continue
        bench.execute(result.insight.insight_id)
        bench.record_verdict(result.insight.insight_id, "validated",
                             notes="fake-run output matches", reviewer="r-1")

    question_batches = []
    for result in results:
        insight = result.insight
        insight.status = "validated"
        for kind in ("oeq", "mcq"):
            drafts, raws = generate_questions(insight, kind, SPEC, gateway)
            question_batches.append((insight, kind, drafts, raws))
            for draft in drafts:
                aid = store.put_artifact(
                    "question", draft,
                    ProvenanceStamp(producer="generate_questions",
                                    pipeline_stage="question-generation",
                                    parent_ids=[result.insight_artifact]),
                )
                report = auto_filter(draft, REFS, JUDGE, gateway)
                record_filter_outcome(store, aid, report)
                apply_manual_flags(store, draft["question_id"], [], reviewer="r-1")

    triplets, counts = assemble_benchmark(store)

    # one triplet of each kind through the agent, so judging and MCQ scoring
    # both see real answers
    agent_pool = [next(t for t in triplets if t["kind"] == "mcq"),
                  next(t for t in triplets if t["kind"] == "oeq")][:agent_triplets]
    config = AgentConfig(planner=SPEC, max_steps=4)
    matrix = run_benchmark(
        agent_pool, config, gateway, store=store, runs=1,
        session_root=workdir / "sessions", limits=FAST_LIMITS,
    )

    mcq_scores = []
    for triplet in agent_pool:
        for answer in matrix[triplet["triplet_id"]]:
            answer_id = f"{answer.triplet_id}/{answer.run_index}"
            transcript = store.latest_where("transcript", "triplet_id", answer.triplet_id)
            if answer.kind == "oeq":
                verdict = judge_open_ended(answer.content or "(none)", triplet["answer"],
                                           JUDGE, gateway, answer_id=answer_id)
                store.put_artifact(
                    "verdict", verdict.to_payload(),
                    ProvenanceStamp(producer="judge_open_ended",
                                    pipeline_stage="answer-judging",
                                    parent_ids=[transcript[0]] if transcript else [],
                                    model_id=JUDGE.model_id),
                )
            else:
                mcq_scores.append(score_mcq(set(answer.content), set(triplet["answer"])))
    if mcq_scores:
        transcript_parents = [aid for aid, _ in store.get_artifacts("transcript")]
        store.put_artifact(
            "report",
            {"report_type": "mcq-aggregate", **macro_average_mcq(mcq_scores)},
            ProvenanceStamp(producer="macro_average_mcq", pipeline_stage="reporting",
                            parent_ids=transcript_parents),
        )

    return {
        "store": store,
        "provider": provider,
        "gateway": gateway,
        "paper": paper,
        "snapshot": snapshot,
        "results": results,
        "question_batches": question_batches,
        "triplets": triplets,
        "counts": counts,
        "matrix": matrix,
        "workdir": workdir,
    }
