"""Acceptance suite. Each criterion runs at its stated tolerance and prints
one pass/fail line; run with `pytest tests/test_acceptance.py -v -s`."""

from __future__ import annotations

import functools
import itertools
import json
import os
import random
import socket
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from benchsmith.agent import AgentConfig, CriticConfig, run_episode
from benchsmith.cli import main as cli_main
from benchsmith.fakes import ScriptedProvider
from benchsmith.gateway import LlmGateway, ModelSpec
from benchsmith.ingest import DatasetManifest
from benchsmith.insights import CodeBlock, WorkflowBundle, count_execute_pairs
from benchsmith.metrics import (
    aggregate_runs,
    categorize_and_compare,
    categorize_score,
    score_mcq,
    score_retrieval,
    spearman,
    weighted_kappa,
)
from benchsmith.questions import auto_filter, oeq_discard
from benchsmith.sandbox import SandboxLimits, execute_workflow
from benchsmith.store import ARTIFACT_KINDS, ArtifactStore

import full_pipeline
from conftest import stamp
from test_metrics import brute_force_mcq, kappa_confusion_oracle
from test_questions import REF_A, REF_B, JUDGE, mcq_filter_gateway, mcq_question, \
    oeq_filter_gateway, oeq_question

FIXTURES = Path(__file__).parent / "fixtures"


def criterion(number, description):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] criterion {number}: {description}")
                raise
            print(f"[PASS] criterion {number}: {description}")
            return result

        return wrapper

    return decorate


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full fake-model pipeline run shared by the criteria that audit it."""
    workdir = tmp_path_factory.mktemp("acceptance-pipeline")
    started = time.perf_counter()
    handles = full_pipeline.run_full_fake_pipeline(workdir)
    handles["elapsed"] = time.perf_counter() - started
    return handles


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network use attempted during an offline criterion")

    monkeypatch.setattr(socket, "create_connection", refuse)
    monkeypatch.setattr(socket.socket, "connect", refuse)


@criterion(1, "MCQ scoring matches the brute-force overlap oracle exhaustively")
def test_criterion_1_mcq_oracle():
    started = time.perf_counter()
    assert score_mcq({"A", "C"}, {"A", "C"}).as_tuple() == (1, 1.0, 1.0)
    assert score_mcq({"A"}, {"A", "C"}).as_tuple() == (0, 0.5, 1.0)
    assert score_mcq({"A", "B", "C", "D"}, {"B"}).as_tuple() == (0, 1.0, 0.25)
    checked = 0
    for size in range(2, 7):
        letters = [chr(ord("A") + i) for i in range(size)]
        subsets = [
            set(c) for r in range(size + 1) for c in itertools.combinations(letters, r)
        ]
        for correct in subsets:
            if not correct:
                continue
            for selected in subsets:
                assert score_mcq(selected, correct).as_tuple() == pytest.approx(
                    brute_force_mcq(selected, correct)
                )
                checked += 1
    assert checked == sum((2**n - 1) * 2**n for n in range(2, 7))
    assert time.perf_counter() - started < 5.0


@criterion(2, "spearman and weighted kappa match independent oracles within 1e-9")
def test_criterion_2_statistics_oracles():
    scipy_stats = pytest.importorskip("scipy.stats")
    started = time.perf_counter()

    assert spearman([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]) == pytest.approx(1.0, abs=1e-12)
    assert weighted_kappa([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]) == pytest.approx(1.0, abs=1e-12)
    assert spearman([1, 2, 3, 4, 5], [1, 3, 2, 5, 4]) == pytest.approx(0.8, abs=1e-12)
    assert weighted_kappa([1, 3], [3, 1], categories=(1, 2, 3)) == pytest.approx(-1.0, abs=1e-12)

    rng = random.Random(20260810)
    scale = (1, 2, 3, 4, 5)
    pairs_checked = 0
    while pairs_checked < 1000:
        n = rng.randint(2, 50)
        x = [rng.randint(1, 5) for _ in range(n)]
        y = [rng.randint(1, 5) for _ in range(n)]
        if len(set(x)) > 1 and len(set(y)) > 1:
            want_rho = scipy_stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(want_rho, abs=1e-9)
        degenerate = len(set(zip(x, y))) == 1 and x[0] == y[0]
        if not degenerate:
            want_kappa = kappa_confusion_oracle(x, y, scale)
            assert weighted_kappa(x, y, scale) == pytest.approx(want_kappa, abs=1e-9)
        pairs_checked += 1
    assert time.perf_counter() - started < 10.0


@criterion(3, "auto-filter decisions reproduce the two-model rules exactly")
def test_criterion_3_filter_rule_table(tmp_path):
    # MCQ: all four (correct?, correct?) combinations end to end
    for a_correct, b_correct in itertools.product([True, False], repeat=2):
        answers = {
            "ref-a": "A,C" if a_correct else "B",
            "ref-b": "A,C" if b_correct else "D",
        }
        gw = mcq_filter_gateway(tmp_path / f"m{a_correct}{b_correct}", answers)
        report = auto_filter(mcq_question(), (REF_A, REF_B), JUDGE, gw)
        expected = "discarded" if (a_correct and b_correct) else "kept"
        assert report["decision"] == expected

    # OEQ: the stated rating grid against the rule, exact decisions
    grid = [2.0, 3.0, 3.2, 3.5]
    for r1, r2 in itertools.product(grid, grid):
        assert oeq_discard(r1, r2) is (r1 > 3.0 and r2 > 3.0)

    # OEQ end to end at the integer ratings the judge can emit
    for r1, r2 in itertools.product([2, 3, 4, 5], repeat=2):
        gw = oeq_filter_gateway(tmp_path / f"o{r1}{r2}", {"ref-a": r1, "ref-b": r2})
        report = auto_filter(oeq_question(), (REF_A, REF_B), JUDGE, gw)
        expected = "discarded" if (r1 > 3.0 and r2 > 3.0) else "kept"
        assert report["decision"] == expected


@criterion(4, "fake-LLM pipeline round-trip parses every stage, offline, in <10s")
def test_criterion_4_pipeline_round_trip(tmp_path, no_network):
    started = time.perf_counter()
    handles = full_pipeline.run_full_fake_pipeline(tmp_path / "run", agent_triplets=0)
    elapsed = time.perf_counter() - started
    store: ArtifactStore = handles["store"]
    snapshot = handles["snapshot"]

    insights = store.get_artifacts("insight", stage_filter="insight-extraction")
    assert len(insights) == 10
    for _, payload in insights:
        assert payload["summary"] and payload["derivation"] and payload["grounding_text"]
    assert sorted(p["rank"] for _, p in insights) == list(range(1, 11))

    descriptions = store.get_artifacts("file-descriptions")
    assert len(descriptions) == 1
    assert sorted(descriptions[0][1]["descriptions"]) == snapshot.paths()

    known = set(snapshot.paths())
    match_sets = store.get_artifacts("match-set")
    assert len(match_sets) == 10
    for _, payload in match_sets:
        assert 0 < len(payload["paths"]) <= 5
        assert set(payload["paths"]) <= known

    workflows = store.get_artifacts("workflow")
    assert len(workflows) == 10
    for aid, payload in workflows:
        raw_parents = [
            p for p in store.parents_of(aid)
            if p.kind == "report"
            and store.get_payload(p).get("report_type") == "raw-completion"
        ]
        assert raw_parents, "workflow lacks its raw completion"
        raw_text = store.get_payload(raw_parents[-1])["text"]
        assert count_execute_pairs(raw_text) == len(payload["blocks"])

    per_insight = {}
    for insight, kind, drafts, _ in handles["question_batches"]:
        assert len(drafts) == 2
        bucket = per_insight.setdefault(insight.insight_id, {"oeq": 0, "mcq": 0})
        bucket[kind] += len(drafts)
        if kind == "mcq":
            assert drafts[0]["correct"] == ["A", "C"]  # parsed from an "A,C"-style string
    assert len(per_insight) == 10
    assert all(v == {"oeq": 2, "mcq": 2} for v in per_insight.values())

    assert elapsed < 10.0


@criterion(5, "sandbox shares state, halts on error, times out, and confines writes")
def test_criterion_5_sandbox(tmp_path):
    def bundle(codes):
        return WorkflowBundle(
            workflow_id="wf", insight_id="i",
            blocks=[CodeBlock(code=c, reasoning="", derived_from=[]) for c in codes],
        )

    limits = SandboxLimits(per_block_seconds=20, total_seconds=60)

    shared = execute_workflow(
        bundle(["x = 2", "y = x * 21", "print(y)"]), DatasetManifest(),
        limits=limits, session_root=tmp_path / "s1",
    )
    assert [b.status for b in shared.blocks] == ["ok", "ok", "ok"]
    assert shared.blocks[2].stdout.strip() == "42"

    halted = execute_workflow(
        bundle(["x = 1", "raise RuntimeError('boom')", "print('never')"]),
        DatasetManifest(), limits=limits, session_root=tmp_path / "s2",
    )
    assert [b.status for b in halted.blocks] == ["ok", "error", "not-run"]

    timed = execute_workflow(
        bundle(["import time", "time.sleep(30)"]), DatasetManifest(),
        limits=SandboxLimits(per_block_seconds=0.5, total_seconds=30),
        session_root=tmp_path / "s3",
    )
    assert [b.status for b in timed.blocks] == ["ok", "timeout"]

    escape_target = tmp_path / "escape.txt"
    probe = execute_workflow(
        bundle([f"open({str(escape_target)!r}, 'w').write('x')"]), DatasetManifest(),
        limits=limits, session_root=tmp_path / "s4",
    )
    assert probe.blocks[0].status == "error"
    assert "PermissionError" in probe.blocks[0].stderr
    assert not escape_target.exists()


@criterion(6, "categorization thresholds, strict 0.5 counting, and run aggregation")
def test_criterion_6_bookkeeping():
    assert categorize_score(4.55) == "high"
    assert categorize_score(4.0) == "mid"
    assert categorize_score(2.0) == "low"

    baseline = {"q1": 2.0, "q2": 3.0, "q3": 2.5, "q4": 1.0}
    variant = {"q1": 2.6, "q2": 2.3, "q3": 3.0, "q4": 1.2}  # +0.6, -0.7, +0.5, +0.2
    report = categorize_and_compare(baseline, variant)
    assert (report.better_count, report.worse_count) == (1, 1)

    agg = aggregate_runs({"q": [2.03, 2.08, 2.13]})
    assert agg.overall_mean == pytest.approx(2.08, abs=1e-9)
    assert agg.dispersion == pytest.approx(0.05, abs=1e-9)


@criterion(7, "critic placement, step bounds, and retriever-disabled surfacing")
def test_criterion_7_agent_loop(tmp_path):
    from test_agent import CRITIC, PLANNER, episode, scripted_planner

    started = time.perf_counter()
    acts = ["<execute>x = 1</execute>", "<execute>print(x)</execute>"]

    transcript, _ = episode(
        tmp_triplet(tmp_path / "d1"), tmp_path / "w1", scripted_planner(acts),
        critic=CriticConfig(placement="plan", spec=CRITIC),
        critic_reply="tighten the plan",
    )
    stages = transcript.stages()
    assert stages.count("critique-plan") == 1 and stages.count("critique-end") == 0
    assert stages[stages.index("plan") + 1] == "critique-plan"

    transcript, _ = episode(
        tmp_triplet(tmp_path / "d2"), tmp_path / "w2", scripted_planner(acts),
        critic=CriticConfig(placement="end", spec=CRITIC),
    )
    stages = transcript.stages()
    assert stages.count("critique-end") == 1 and stages.count("critique-plan") == 0
    assert stages[-2:] == ["critique-end", "answer"]
    assert stages.index("critique-end") > max(i for i, s in enumerate(stages) if s == "act")

    transcript, _ = episode(tmp_triplet(tmp_path / "d3"), tmp_path / "w3",
                            scripted_planner(acts))
    assert transcript.count("critique-plan") == transcript.count("critique-end") == 0

    for max_steps in (1, 3):
        transcript, answer = episode(
            tmp_triplet(tmp_path / f"d4-{max_steps}"), tmp_path / f"w4-{max_steps}",
            scripted_planner(["<execute>pass</execute>"] * 20), max_steps=max_steps,
        )
        assert transcript.count("act") <= max_steps
        assert transcript.stages()[-1] == "answer"
        assert answer.status == "truncated"

    transcript, _ = episode(tmp_triplet(tmp_path / "d5"), tmp_path / "w5",
                            scripted_planner(acts))
    retrieve = json.loads(transcript.events[0]["payload"])
    assert retrieve["retriever_enabled"] is False
    assert len(retrieve["surfaced_tools"]) == retrieve["registry_size"]

    assert time.perf_counter() - started < 5.0


def tmp_triplet(data_dir: Path) -> dict:
    data_dir.mkdir(parents=True, exist_ok=True)
    data = data_dir / "counts.csv"
    data.write_text("gene,count\nG1,7\n")
    return {
        "triplet_id": f"t-{data_dir.name}",
        "manifest": {"entries": [[str(data), data.stat().st_size, "toy"]],
                     "total_bytes": data.stat().st_size},
        "question_id": "q1",
        "kind": "oeq",
        "question": {"question_id": "q1", "kind": "oeq",
                     "question": "What changes?", "answer": "It grows."},
        "answer": "It grows.",
        "split_tags": ["full"],
    }


@criterion(8, "retrieval report matches hand computation and runs on bundled fixtures")
def test_criterion_8_retrieval():
    truth = {k: set(v) for k, v in json.loads(
        (FIXTURES / "retrieval_truth.json").read_text()).items()}
    retrieved = {k: set(v) for k, v in json.loads(
        (FIXTURES / "retrieval_retrieved.json").read_text()).items()}

    report = score_retrieval(truth, retrieved)
    # hand-computed per-insight fractions:
    # i0 1.0, i1 0.5, i2 0.75, i3 1.0, i4 0.5, i5 0.0, i6 1.0, i7 0.0, i8 1.0, i9 0.5
    assert report.macro_average == pytest.approx(0.625)
    assert report.histogram == {0: 6, 1: 3, 2: 1}
    assert sum(report.histogram.values()) == 10
    assert report.per_insight["i2"]["correct_fraction"] == 0.75
    assert report.per_insight["i4"]["incorrect_count"] == 2

    # proxy harness end to end over the same bundled fixtures via the CLI
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "eval", "retrieval",
        "--truth", str(FIXTURES / "retrieval_truth.json"),
        "--retrieved", str(FIXTURES / "retrieval_retrieved.json"),
    ], catch_exceptions=False)
    assert result.exit_code == 0
    assert "macro-average correct fraction: 0.6250" in result.output


@criterion(9, "store round-trips every kind, deduplicates, and verifies clean")
def test_criterion_9_store(pipeline, tmp_path, sample_payloads):
    fresh = ArtifactStore(tmp_path / "fresh-store")
    for kind in ARTIFACT_KINDS:
        payload = sample_payloads[kind]
        aid = fresh.put_artifact(kind, payload, stamp())
        assert fresh.get_payload(aid) == payload
        again = fresh.put_artifact(kind, json.loads(json.dumps(payload)), stamp())
        assert again == aid
        assert len(fresh.get_artifacts(kind)) == 1

    store: ArtifactStore = pipeline["store"]
    present_kinds = {k for k in ARTIFACT_KINDS if store.get_artifacts(k)}
    assert present_kinds == set(ARTIFACT_KINDS)

    # lineage completeness: every parent chain ends at a paper or repo snapshot
    index = store._load_index()
    root_kinds = set()
    seen = set()
    frontier = list(index)
    while frontier:
        current = frontier.pop()
        if current in seen:
            continue
        seen.add(current)
        parents = index[current]["parents"]
        if not parents:
            root_kinds.add(index[current]["kind"])
        else:
            frontier.extend(parents)
    assert root_kinds == {"paper", "repo-snapshot"}

    runner = CliRunner()
    result = runner.invoke(
        cli_main, ["--store", str(store.root), "store", "verify"], catch_exceptions=False
    )
    assert result.exit_code == 0
    assert "0 mismatches" in result.output


LIVE_PROVIDERS = os.environ.get("BENCHSMITH_LIVE_PROVIDERS")
LIVE_MODEL = os.environ.get("BENCHSMITH_LIVE_MODEL")


@pytest.mark.skipif(
    not (LIVE_PROVIDERS and LIVE_MODEL),
    reason="live smoke needs BENCHSMITH_LIVE_PROVIDERS and BENCHSMITH_LIVE_MODEL",
)
@criterion(10, "live smoke: one real provider parses an insight and an MCQ")
def test_criterion_10_live_smoke(tmp_path):
    from benchsmith.cli import parse_model_spec
    from benchsmith.gateway import load_providers_config
    from benchsmith.ingest import load_paper, snapshot_repository
    from benchsmith.insights import extract_insights
    from benchsmith.questions import generate_questions

    corpus = full_pipeline.build_corpus(tmp_path / "corpus")
    providers = load_providers_config(LIVE_PROVIDERS)
    call_budget = {"used": 0}

    class Counting:
        def __init__(self, inner):
            self.inner = inner

        def send(self, spec, messages, timeout):
            call_budget["used"] += 1
            assert call_budget["used"] <= 20, "live smoke exceeded its 20-call budget"
            return self.inner.send(spec, messages, timeout)

    gateway = LlmGateway({name: Counting(p) for name, p in providers.items()},
                         cache_dir=tmp_path / "cache")
    spec = parse_model_spec(LIVE_MODEL)

    paper = load_paper(corpus["paper"])
    snapshot_repository(corpus["repo"])  # smoke the ingestion path too
    candidates, _ = extract_insights(paper, spec, gateway, count=3)
    assert len(candidates) >= 1
    first = candidates[0]
    first.status = "validated"
    drafts, _ = generate_questions(first, "mcq", spec, gateway)
    assert len(drafts) >= 1
    assert drafts[0]["correct"] and set(drafts[0]["correct"]) <= set(drafts[0]["options"])
