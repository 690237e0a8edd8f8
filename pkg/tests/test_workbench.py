from __future__ import annotations

import time

import pytest

from benchsmith.ingest import DatasetManifest
from benchsmith.insights import CodeBlock, WorkflowBundle
from benchsmith.sandbox import (
    InterpreterMissing,
    SandboxLimits,
    SandboxSetupFailure,
    execute_workflow,
)
from benchsmith.store import ProvenanceStamp
from benchsmith.workbench import (
    BlockPatch,
    EditRecord,
    InvalidEdit,
    NoExecution,
    PrematureValidate,
    StaleEdit,
    Workbench,
)

from conftest import stamp


def bundle(codes, workflow_id="w1", insight_id="p1-i1"):
    return WorkflowBundle(
        workflow_id=workflow_id,
        insight_id=insight_id,
        blocks=[CodeBlock(code=c, reasoning="", derived_from=[]) for c in codes],
    )


def run(codes, tmp_path, dataset=None, limits=None):
    return execute_workflow(
        bundle(codes),
        dataset or DatasetManifest(),
        limits=limits or SandboxLimits(per_block_seconds=20, total_seconds=60),
        session_root=tmp_path / "sessions",
    )


class TestSandbox:
    def test_shared_state_across_blocks(self, tmp_path):
        report = run(["x = 2", "print(x * 21)"], tmp_path)
        assert [b.status for b in report.blocks] == ["ok", "ok"]
        assert report.blocks[1].stdout.strip() == "42"

    def test_error_halts_later_blocks_not_run(self, tmp_path):
        report = run(["x = 1", "y = 1 / 0", "print('never')"], tmp_path)
        assert [b.status for b in report.blocks] == ["ok", "error", "not-run"]
        assert "ZeroDivisionError" in report.blocks[1].stderr

    def test_per_block_timeout(self, tmp_path):
        report = run(
            ["import time", "time.sleep(30)", "print('never')"],
            tmp_path,
            limits=SandboxLimits(per_block_seconds=0.5, total_seconds=30),
        )
        assert [b.status for b in report.blocks] == ["ok", "timeout", "not-run"]

    def test_out_of_tree_write_denied(self, tmp_path):
        target = tmp_path / "outside.txt"
        report = run(
            [f"open({str(target)!r}, 'w').write('escape')"],
            tmp_path,
        )
        assert report.blocks[0].status == "error"
        assert "PermissionError" in report.blocks[0].stderr
        assert not target.exists()

    def test_out_of_tree_read_denied(self, tmp_path):
        secret = tmp_path / "secret.txt"
        secret.write_text("do not read")
        report = run([f"print(open({str(secret)!r}).read())"], tmp_path)
        assert report.blocks[0].status == "error"
        assert "PermissionError" in report.blocks[0].stderr

    def test_writes_inside_session_allowed_and_attributed(self, tmp_path):
        report = run(
            ["open('figure1.txt', 'w').write('plot')", "open('table2.txt', 'w').write('stats')"],
            tmp_path,
        )
        assert report.blocks[0].emitted_artifacts == ["figure1.txt"]
        assert report.blocks[1].emitted_artifacts == ["table2.txt"]

    def test_dataset_paths_readable_via_preamble(self, tmp_path):
        data = tmp_path / "counts.csv"
        data.write_text("gene,count\nG1,7\n")
        manifest = DatasetManifest(entries=[(str(data), data.stat().st_size, "toy counts")])
        report = run(
            ["text = open(adata).read()", "print(text.splitlines()[1])"],
            tmp_path,
            dataset=manifest,
        )
        assert report.blocks[1].stdout.strip() == "G1,7"

    def test_interpreter_missing(self, tmp_path):
        wf = bundle(["x = 1"])
        wf.language_hint = "cobol"
        with pytest.raises(InterpreterMissing):
            execute_workflow(wf, DatasetManifest(), session_root=tmp_path / "s")

    def test_missing_dataset_path(self, tmp_path):
        manifest = DatasetManifest(entries=[(str(tmp_path / "ghost.h5"), 1, "gone")])
        with pytest.raises(SandboxSetupFailure):
            run(["pass"], tmp_path, dataset=manifest)

    def test_deterministic_outcomes(self, tmp_path):
        outcomes = [
            tuple(b.status for b in run(["x = 5", "print(x)"], tmp_path).blocks)
            for _ in range(3)
        ]
        assert set(outcomes) == {("ok", "ok")}


@pytest.fixture
def bench(store, sample_payloads, tmp_path):
    store.put_artifact("paper", sample_payloads["paper"], stamp())
    store.put_artifact("insight", sample_payloads["insight"], stamp(stage="insight-extraction"))
    workflow = dict(sample_payloads["workflow"])
    workflow["blocks"] = [
        {"code": "x = 2", "reasoning": "state", "derived_from": []},
        {"code": "print(x * 21)", "reasoning": "use", "derived_from": []},
    ]
    store.put_artifact("workflow", workflow, stamp(stage="workflow-generation"))
    return Workbench(
        store=store,
        sessions_root=tmp_path / "sessions",
        limits=SandboxLimits(per_block_seconds=20, total_seconds=60),
    )


class TestWorkbench:
    def test_execute_persists_report(self, bench):
        report_aid, report = bench.execute("p1-i1")
        assert report.all_ok()
        assert bench.store.get_payload(report_aid)["workflow_id"] == "w1"

    def test_verdict_gate(self, bench):
        with pytest.raises(NoExecution):
            bench.record_verdict("p1-i1", "validated", reviewer="r-1")
        bench.execute("p1-i1")
        bench.record_verdict("p1-i1", "validated", notes="matches figure", reviewer="r-1")
        assert bench.insight_status("p1-i1") == "validated"

    def test_premature_validate(self, bench):
        edit = EditRecord(
            workflow_id="w1",
            category="metadata-renaming",
            patch=[BlockPatch(0, "x = 2", "x = 1 / 0")],
            author="r-1",
        )
        bench.apply_edit("p1-i1", edit)
        bench.execute("p1-i1")
        with pytest.raises(PrematureValidate):
            bench.record_verdict("p1-i1", "validated", reviewer="r-1")
        # invalidation with a reason is still allowed
        bench.record_verdict(
            "p1-i1", "invalidated", reason="workflow-dataset-inconsistency", reviewer="r-1"
        )
        assert bench.insight_status("p1-i1") == "invalidated"

    def test_overly_generic_invalidation(self, bench):
        bench.execute("p1-i1")
        bench.record_verdict(
            "p1-i1", "invalidated", reason="overly-generic",
            notes="insight restates that the study presents a comprehensive atlas",
            reviewer="r-2",
        )
        assert bench.insight_status("p1-i1") == "invalidated"

    def test_edit_creates_superseding_bundle(self, bench):
        edit = EditRecord(
            workflow_id="w1",
            category="metadata-renaming",
            patch=[BlockPatch(1, "print(x * 21)", "print(x * 50)")],
            author="r-1",
        )
        new_aid = bench.apply_edit("p1-i1", edit)
        _, latest = bench.latest_bundle("p1-i1")
        assert latest["blocks"][1]["code"] == "print(x * 50)"
        assert latest["blocks"][0]["code"] == "x = 2"
        parents = bench.store.parents_of(new_aid)
        assert any(p.kind == "workflow" for p in parents)

    def test_stale_edit_rejected(self, bench):
        good = EditRecord(
            workflow_id="w1", category="dataset-loading",
            patch=[BlockPatch(0, "x = 2", "x = 3")], author="r-1",
        )
        bench.apply_edit("p1-i1", good)
        with pytest.raises(StaleEdit):
            bench.apply_edit("p1-i1", good)  # targets the superseded bundle

    def test_other_category_requires_justification(self):
        with pytest.raises(InvalidEdit):
            EditRecord(workflow_id="w1", category="other",
                       patch=[BlockPatch(0, "a", "b")], author="r-1")
        EditRecord(workflow_id="w1", category="other",
                   patch=[BlockPatch(0, "a", "b")], author="r-1",
                   justification="swapped to supplementary file")

    def test_replay_edits_reproduces_final_bundle(self, bench):
        bench.apply_edit("p1-i1", EditRecord(
            workflow_id="w1", category="dataset-loading",
            patch=[BlockPatch(0, "x = 2", "x = 4")], author="r-1",
        ))
        _, mid = bench.latest_bundle("p1-i1")
        bench.apply_edit("p1-i1", EditRecord(
            workflow_id=mid["workflow_id"], category="metadata-renaming",
            patch=[BlockPatch(1, "print(x * 21)", "print(x * 10)")], author="r-1",
        ))
        replayed = bench.replay_edits("p1-i1")
        _, final = bench.latest_bundle("p1-i1")
        assert replayed["blocks"] == final["blocks"]

    def test_pending_queue(self, bench, sample_payloads):
        insight2 = dict(sample_payloads["insight"])
        insight2["insight_id"] = "p1-i2"
        bench.store.put_artifact("insight", insight2, stamp(stage="insight-extraction"))
        workflow2 = dict(sample_payloads["workflow"])
        workflow2["workflow_id"] = "w2"
        workflow2["insight_id"] = "p1-i2"
        bench.store.put_artifact("workflow", workflow2, stamp(stage="workflow-generation"))

        assert bench.pending_queue() == ["p1-i1", "p1-i2"]
        bench.execute("p1-i1")
        bench.record_verdict("p1-i1", "validated", reviewer="r-1")
        assert bench.pending_queue() == ["p1-i2"]

    def test_empty_store_queue(self, store, tmp_path):
        bench = Workbench(store=store, sessions_root=tmp_path / "s")
        assert bench.pending_queue() == []
