"""Command-line front door: store inspection, ingestion, the insight
pipeline, the review loop, question generation/filtering, benchmark
assembly, agent runs, and evaluation."""

from __future__ import annotations

import json
import re
import sys
from pathlib import Path

import click

from . import ingest as ingest_mod
from . import metrics, prompts
from .agent import AgentConfig, run_benchmark
from .gateway import LlmGateway, ModelSpec, load_providers_config
from .insights import InsightCandidate, SpecSet, run_insight_stage
from .judging import judge_open_ended
from .questions import (
    apply_manual_flags,
    assemble_benchmark,
    auto_filter,
    export_benchmark_jsonl,
    generate_questions,
    load_benchmark_jsonl,
    record_filter_outcome,
)
from .sandbox import InterpreterConfig, SandboxLimits
from .store import ArtifactId, ArtifactStore, ProvenanceStamp, StoreError
from .workbench import Workbench


def parse_model_spec(text: str) -> ModelSpec:
    """'provider:model-id[:temperature]' -> ModelSpec."""
    parts = text.split(":")
    if len(parts) < 2:
        raise click.BadParameter(f"model spec {text!r}; expected provider:model-id")
    temperature = float(parts[2]) if len(parts) > 2 else 0.0
    return ModelSpec(provider=parts[0], model_id=parts[1], temperature=temperature)


def parse_size(text: str) -> int:
    """'750MB' / '1.5GB' / '1000' -> bytes (decimal units)."""
    match = re.fullmatch(r"\s*([\d.]+)\s*([KMGT]?B?)\s*", text, flags=re.IGNORECASE)
    if not match:
        raise click.BadParameter(f"unparseable size {text!r}")
    scale = {"": 1, "B": 1, "KB": 10**3, "MB": 10**6, "GB": 10**9, "TB": 10**12}
    return int(float(match.group(1)) * scale[match.group(2).upper()])


class Context:
    def __init__(self, store_root: str, providers_path: str | None):
        self.store_root = store_root
        self.providers_path = providers_path
        self._store = None
        self._gateway = None

    @property
    def store(self) -> ArtifactStore:
        if self._store is None:
            self._store = ArtifactStore(self.store_root)
        return self._store

    def gateway(self, use_cache: bool = True) -> LlmGateway:
        if self._gateway is None:
            if not self.providers_path:
                raise click.ClickException(
                    "this command calls language models; pass --providers <config.json>"
                )
            providers = load_providers_config(self.providers_path)
            self._gateway = LlmGateway(
                providers,
                cache_dir=Path(self.store_root) / "cache" if use_cache else None,
            )
        return self._gateway


@click.group()
@click.option("--store", "store_root", default="benchstore", envvar="BENCHSMITH_STORE",
              show_default=True, help="Artifact store root directory.")
@click.option("--providers", "providers_path", default=None, envvar="BENCHSMITH_PROVIDERS",
              help="Providers config JSON (name -> base_url, api_key_env).")
@click.pass_context
def main(ctx, store_root, providers_path):
    ctx.obj = Context(store_root, providers_path)


# -- store -------------------------------------------------------------------


@main.group()
def store():
    """Inspect the artifact store."""


@store.command("ls")
@click.option("--kind", required=True)
@click.option("--stage", default=None)
@click.option("--parent", default=None)
@click.pass_obj
def store_ls(ctx, kind, stage, parent):
    parent_id = ArtifactId.parse(parent) if parent else None
    rows = ctx.store.get_artifacts(kind, stage_filter=stage, parent=parent_id)
    for aid, _ in rows:
        click.echo(str(aid))
    click.echo(f"({len(rows)} artifacts)", err=True)


@store.command("show")
@click.argument("artifact_id")
@click.pass_obj
def store_show(ctx, artifact_id):
    try:
        aid = ArtifactId.parse(artifact_id)
        record = {
            "id": str(aid),
            "payload": ctx.store.get_payload(aid),
            "provenance": ctx.store.get_provenance(aid),
        }
    except StoreError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(record, indent=2, ensure_ascii=False))


@store.command("verify")
@click.pass_obj
def store_verify(ctx):
    mismatches = ctx.store.verify()
    if mismatches:
        for bad in mismatches:
            click.echo(f"MISMATCH {bad}")
        sys.exit(1)
    click.echo("store verify: 0 mismatches")


# -- ingest --------------------------------------------------------------------


@main.group()
def ingest():
    """Ingest papers, repositories, and dataset manifests."""


@ingest.command("paper")
@click.argument("path", type=click.Path(exists=True))
@click.option("--paper-id", default=None)
@click.pass_obj
def ingest_paper(ctx, path, paper_id):
    doc = ingest_mod.load_paper(path, paper_id=paper_id)
    aid = ctx.store.put_artifact(
        "paper", doc.to_payload(),
        ProvenanceStamp(producer="load_paper", pipeline_stage="ingest"),
    )
    click.echo(str(aid))


@ingest.command("repo")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("--ext", multiple=True, help="Extension filter, e.g. --ext .py --ext .R")
@click.option("--repo-id", default=None)
@click.pass_obj
def ingest_repo(ctx, root, ext, repo_id):
    extensions = tuple(ext) if ext else ingest_mod.DEFAULT_CODE_EXTENSIONS
    snap = ingest_mod.snapshot_repository(root, extension_filter=extensions, repo_id=repo_id)
    aid = ctx.store.put_artifact(
        "repo-snapshot", snap.to_payload(),
        ProvenanceStamp(producer="snapshot_repository", pipeline_stage="ingest"),
    )
    click.echo(str(aid))
    click.echo(f"({len(snap.files)} files)", err=True)


@ingest.command("datasets")
@click.argument("spec_file", type=click.Path(exists=True))
@click.option("--paper", "paper_id", required=True, help="Paper id this dataset belongs to.")
@click.pass_obj
def ingest_datasets(ctx, spec_file, paper_id):
    entries = json.loads(Path(spec_file).read_text("utf-8"))
    manifest = ingest_mod.build_dataset_manifest(
        [(e["path"], e.get("description", "")) for e in entries]
    )
    payload = {"report_type": "dataset-manifest", "paper_id": paper_id}
    payload.update(manifest.to_payload())
    paper = ctx.store.latest_where("paper", "paper_id", paper_id)
    aid = ctx.store.put_artifact(
        "report", payload, ProvenanceStamp(producer="build_dataset_manifest",
                                           pipeline_stage="ingest",
                                           parent_ids=[paper[0]] if paper else []),
    )
    click.echo(str(aid))
    click.echo(f"(total {manifest.total_bytes} bytes)", err=True)


@main.group()
def split():
    """Benchmark splits."""


@split.command("lite")
@click.option("--limit", default="750MB", show_default=True)
@click.option("--benchmark", "benchmark_file", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", default=None)
def split_lite(limit, benchmark_file, output):
    triplets = load_benchmark_jsonl(benchmark_file)
    kept = ingest_mod.select_lite(triplets, size_limit_bytes=parse_size(limit))
    out_path = output or benchmark_file.replace(".jsonl", "") + ".lite.jsonl"
    export_benchmark_jsonl(kept, out_path)
    click.echo(f"kept {len(kept)}/{len(triplets)} triplets -> {out_path}")


# -- insights ------------------------------------------------------------------


@main.group()
def insights():
    """Insight pipeline."""


@insights.command("run")
@click.option("--paper", "paper_ref", required=True, help="Paper artifact id or paper id.")
@click.option("--repo", "repo_ref", required=True, help="Repo-snapshot artifact id or repo id.")
@click.option("--count", default=10, show_default=True)
@click.option("--extractor-model", required=True, help="provider:model-id for extraction.")
@click.option("--coder-model", required=True, help="provider:model-id for code stages.")
@click.pass_obj
def insights_run(ctx, paper_ref, repo_ref, count, extractor_model, coder_model):
    paper = _resolve(ctx.store, "paper", "paper_id", paper_ref)
    snap = _resolve(ctx.store, "repo-snapshot", "repo_id", repo_ref)
    specs = SpecSet(extractor=parse_model_spec(extractor_model),
                    coder=parse_model_spec(coder_model))
    results = run_insight_stage(
        ingest_mod.PaperDocument.from_payload(paper),
        ingest_mod.RepositorySnapshot.from_payload(snap),
        specs, ctx.gateway(), ctx.store, count=count,
    )
    for result in results:
        state = "bundle" if result.bundle else f"FAILED ({result.failure})"
        click.echo(f"{result.insight.insight_id}: {state}")


def _resolve(store: ArtifactStore, kind: str, key: str, ref: str) -> dict:
    if ":" in ref:
        return store.get_payload(ArtifactId.parse(ref))
    found = store.latest_where(kind, key, ref)
    if found is None:
        raise click.ClickException(f"no {kind} with {key}={ref!r}")
    return found[1]


# -- review --------------------------------------------------------------------


def _workbench(ctx) -> Workbench:
    return Workbench(store=ctx.store, sessions_root=Path(ctx.store_root) / "sessions")


@main.group()
def review():
    """Human validation loop."""


@review.command("next")
@click.pass_obj
def review_next(ctx):
    queue = _workbench(ctx).pending_queue()
    if not queue:
        click.echo("no pending insights")
        return
    for insight_id in queue:
        click.echo(insight_id)


@review.command("show")
@click.argument("insight_id")
@click.pass_obj
def review_show(ctx, insight_id):
    bench = _workbench(ctx)
    _, insight = bench.latest_insight(insight_id)
    bundle = bench.latest_bundle(insight_id)
    report = bench.latest_report(insight_id)
    click.echo(json.dumps({
        "insight": insight,
        "bundle": bundle[1] if bundle else None,
        "report": report[1] if report else None,
    }, indent=2, ensure_ascii=False))


@review.command("execute")
@click.argument("insight_id")
@click.pass_obj
def review_execute(ctx, insight_id):
    _, report = _workbench(ctx).execute(insight_id)
    for i, block in enumerate(report.blocks):
        click.echo(f"block {i}: {block.status}")
    click.echo(f"total {report.total_wall_clock:.1f}s")


@review.command("verdict")
@click.argument("insight_id")
@click.option("--validated", "verdict", flag_value="validated")
@click.option("--invalidated", "verdict", flag_value="invalidated")
@click.option("--reason", default=None)
@click.option("--notes", default="")
@click.option("--reviewer", required=True)
@click.pass_obj
def review_verdict(ctx, insight_id, verdict, reason, notes, reviewer):
    if verdict is None:
        raise click.ClickException("pass --validated or --invalidated")
    aid = _workbench(ctx).record_verdict(insight_id, verdict, reason=reason,
                                         notes=notes, reviewer=reviewer)
    click.echo(str(aid))


@review.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
@click.option("--ui", "ui_dir", default=None, type=click.Path(file_okay=False),
              help="Static directory with the review UI build.")
@click.pass_obj
def review_serve(ctx, host, port, ui_dir):
    import uvicorn

    from .service import create_app

    app = create_app(_workbench(ctx), static_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


# -- questions -----------------------------------------------------------------


@main.group()
def questions():
    """Question generation and filtering."""


@questions.command("gen")
@click.option("--insight", "insight_id", required=True)
@click.option("--kind", type=click.Choice(["oeq", "mcq"]), required=True)
@click.option("--model", required=True, help="provider:model-id")
@click.pass_obj
def questions_gen(ctx, insight_id, kind, model):
    found = ctx.store.latest_where("insight", "insight_id", insight_id)
    if found is None:
        raise click.ClickException(f"unknown insight {insight_id}")
    insight_aid, payload = found
    drafts, _ = generate_questions(
        InsightCandidate.from_payload(payload), kind, parse_model_spec(model), ctx.gateway()
    )
    for draft in drafts:
        aid = ctx.store.put_artifact(
            "question", draft,
            ProvenanceStamp(producer="generate_questions",
                            pipeline_stage="question-generation", parent_ids=[insight_aid]),
        )
        click.echo(f"{draft['question_id']} -> {aid}")


@questions.command("filter")
@click.option("--reference", "references", multiple=True, required=True,
              help="Two reference model specs (repeat the flag).")
@click.option("--judge", required=True, help="Judge model spec for open-ended probes.")
@click.pass_obj
def questions_filter(ctx, references, judge):
    if len(references) != 2:
        raise click.ClickException("exactly two --reference specs required")
    reference_specs = tuple(parse_model_spec(r) for r in references)
    judge_spec = parse_model_spec(judge)
    gateway = ctx.gateway()
    seen = set()
    for aid, payload in reversed(ctx.store.get_artifacts("question")):
        if payload["question_id"] in seen:
            continue
        seen.add(payload["question_id"])
        if payload["filter_status"] != "draft":
            continue
        report = auto_filter(payload, reference_specs, judge_spec, gateway)
        record_filter_outcome(ctx.store, aid, report)
        click.echo(f"{payload['question_id']}: {report['decision']}")


@questions.command("finalize")
@click.argument("question_id")
@click.option("--flag", "flags", multiple=True,
              type=click.Choice(["hallucination", "duplicate", "non-validated-part"]))
@click.option("--reviewer", required=True)
@click.pass_obj
def questions_finalize(ctx, question_id, flags, reviewer):
    updated = apply_manual_flags(ctx.store, question_id, list(flags), reviewer)
    click.echo(f"{question_id}: {updated['filter_status']}")


@main.group()
def benchmark():
    """Benchmark assembly and export."""


@benchmark.command("assemble")
@click.option("--splits", default="full,lite", show_default=True)
@click.option("-o", "--output", default="benchmark.jsonl", show_default=True)
@click.pass_obj
def benchmark_assemble(ctx, splits, output):
    wanted = set(splits.split(","))
    triplets, counts = assemble_benchmark(ctx.store)
    kept = [t for t in triplets if wanted & set(t["split_tags"])]
    export_benchmark_jsonl(kept, output)
    click.echo(f"exported {len(kept)} triplets -> {output}")
    for paper_id, by_kind in sorted(counts.items()):
        click.echo(f"  {paper_id}: {by_kind['oeq']} oeq, {by_kind['mcq']} mcq", err=True)


# -- agent ---------------------------------------------------------------------


@main.group()
def agent():
    """Reference agent runs."""


@agent.command("run")
@click.option("--benchmark", "benchmark_file", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", required=True, type=click.Path(exists=True))
@click.option("--runs", default=3, show_default=True)
@click.option("--transcripts", default="transcripts.jsonl", show_default=True)
@click.pass_obj
def agent_run(ctx, benchmark_file, config_file, runs, transcripts):
    triplets = load_benchmark_jsonl(benchmark_file)
    config = AgentConfig.load(config_file)
    matrix = run_benchmark(
        triplets, config, ctx.gateway(use_cache=False), store=ctx.store, runs=runs,
        session_root=Path(ctx.store_root) / "sessions",
    )
    with Path(transcripts).open("w", encoding="utf-8") as fh:
        for _, payload in ctx.store.get_artifacts("transcript"):
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
    answers = sum(len(v) for v in matrix.values())
    click.echo(f"{answers} answers over {len(matrix)} triplets -> {transcripts}")


# -- eval ----------------------------------------------------------------------


@main.group(name="eval")
def eval_group():
    """Scoring, aggregation, and agreement statistics."""


def _load_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text("utf-8").splitlines() if line.strip()]


@eval_group.command("judge")
@click.option("--answers", "answers_file", required=True, type=click.Path(exists=True))
@click.option("--benchmark", "benchmark_file", required=True, type=click.Path(exists=True))
@click.option("--judge", "judge_model", required=True)
@click.option("-o", "--output", default="verdicts.jsonl", show_default=True)
@click.pass_obj
def eval_judge(ctx, answers_file, benchmark_file, judge_model, output):
    answers = _load_jsonl(answers_file)
    truth = {t["triplet_id"]: t for t in load_benchmark_jsonl(benchmark_file)}
    judge_spec = parse_model_spec(judge_model)
    rows = []
    with Path(output).open("w", encoding="utf-8") as fh:
        for answer in answers:
            if answer["kind"] != "oeq":
                continue
            triplet = truth[answer["triplet_id"]]
            verdict = judge_open_ended(
                answer["content"] or "(no answer)", triplet["answer"],
                judge_spec, ctx.gateway(),
                answer_id=f"{answer['triplet_id']}/{answer['run_index']}",
            )
            fh.write(json.dumps(verdict.to_payload(), ensure_ascii=False) + "\n")
            rows.append([verdict.answer_id, verdict.rating])
    click.echo(metrics.render_table(["answer", "rating"], rows))


@eval_group.command("mcq")
@click.option("--answers", "answers_file", required=True, type=click.Path(exists=True))
@click.option("--benchmark", "benchmark_file", required=True, type=click.Path(exists=True))
def eval_mcq(answers_file, benchmark_file):
    answers = _load_jsonl(answers_file)
    truth = {t["triplet_id"]: t for t in load_benchmark_jsonl(benchmark_file)}
    scores = []
    rows = []
    for answer in answers:
        if answer["kind"] != "mcq":
            continue
        correct = set(truth[answer["triplet_id"]]["answer"])
        score = metrics.score_mcq(set(answer["content"]), correct)
        scores.append(score)
        rows.append([
            f"{answer['triplet_id']}/{answer['run_index']}",
            score.accuracy, f"{score.recall:.3f}", f"{score.precision:.3f}",
        ])
    if not scores:
        raise click.ClickException("no MCQ answers found")
    click.echo(metrics.render_table(["answer", "acc", "recall", "precision"], rows))
    agg = metrics.macro_average_mcq(scores)
    click.echo(json.dumps(agg, indent=2))


@eval_group.command("aggregate")
@click.option("--scores", "scores_file", required=True, type=click.Path(exists=True),
              help="JSON object: question id -> list of per-run scores.")
def eval_aggregate(scores_file):
    matrix = json.loads(Path(scores_file).read_text("utf-8"))
    agg = metrics.aggregate_runs(matrix)
    dispersion = "" if agg.dispersion is None else f" +/- {agg.dispersion:.3f}"
    click.echo(f"overall: {agg.overall_mean:.3f}{dispersion}")
    click.echo(json.dumps(agg.per_question_means, indent=2))


@eval_group.command("compare")
@click.option("--baseline", required=True, type=click.Path(exists=True))
@click.option("--variant", required=True, type=click.Path(exists=True))
def eval_compare(baseline, variant):
    base = json.loads(Path(baseline).read_text("utf-8"))
    var = json.loads(Path(variant).read_text("utf-8"))
    report = metrics.categorize_and_compare(base, var)
    rows = [
        [cat, report.per_category_counts.get(cat, 0),
         f"{report.baseline_means.get(cat, float('nan')):.2f}",
         f"{report.variant_means.get(cat, float('nan')):.2f}"]
        for cat in ("high", "mid", "low")
    ]
    click.echo(metrics.render_table(["category", "n", "baseline", "variant"], rows))
    click.echo(f"better: {report.better_count}  worse: {report.worse_count}")


@eval_group.command("agree")
@click.option("--a", "file_a", required=True, type=click.Path(exists=True))
@click.option("--b", "file_b", required=True, type=click.Path(exists=True))
def eval_agree(file_a, file_b):
    ratings_a = json.loads(Path(file_a).read_text("utf-8"))
    ratings_b = json.loads(Path(file_b).read_text("utf-8"))
    report = metrics.agreement_report("a", ratings_a, "b", ratings_b)
    click.echo(json.dumps({
        "spearman_rho": report.spearman_rho, "kappa": report.kappa, "n": report.n,
    }, indent=2))


@eval_group.command("retrieval")
@click.option("--truth", required=True, type=click.Path(exists=True),
              help="JSON: insight id -> list of ground-truth files.")
@click.option("--retrieved", required=True, type=click.Path(exists=True))
def eval_retrieval(truth, retrieved):
    truth_sets = {k: set(v) for k, v in json.loads(Path(truth).read_text("utf-8")).items()}
    got_sets = {k: set(v) for k, v in json.loads(Path(retrieved).read_text("utf-8")).items()}
    report = metrics.score_retrieval(truth_sets, got_sets)
    click.echo(f"macro-average correct fraction: {report.macro_average:.4f}")
    rows = [[k, v] for k, v in sorted(report.histogram.items())]
    click.echo(metrics.render_table(["incorrect-count", "insights"], rows))


if __name__ == "__main__":
    main()
