from __future__ import annotations

import pytest

from benchsmith.store import ArtifactStore, ProvenanceStamp


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(tmp_path / "store")


def stamp(producer="test", stage="ingest", parents=(), model_id=None):
    return ProvenanceStamp(
        producer=producer,
        pipeline_stage=stage,
        parent_ids=list(parents),
        model_id=model_id,
    )


@pytest.fixture
def sample_payloads():
    """One schema-valid payload per artifact kind."""
    return {
        "paper": {
            "paper_id": "p1",
            "sections": [["Abstract", "We find things."], ["Results", "Numbers went up."]],
            "priority_order": [0, 1],
        },
        "repo-snapshot": {
            "repo_id": "r1",
            "files": [["analysis/a.py", "print('hi')\n", 12]],
            "tree_rendering": "analysis/\n  a.py",
        },
        "insight": {
            "insight_id": "p1-i1",
            "paper_id": "p1",
            "rank": 1,
            "summary": "Cell type X expands under treatment.",
            "derivation": "Differential abundance testing across conditions.",
            "grounding_text": "We observed a marked expansion of X cells.",
            "status": "candidate",
        },
        "file-descriptions": {
            "repo_id": "r1",
            "descriptions": {"analysis/a.py": "Loads the matrix and plots a UMAP."},
        },
        "match-set": {
            "insight_id": "p1-i1",
            "paths": ["analysis/a.py"],
            "dropped": [["ghost.py", "nonexistent"]],
        },
        "workflow": {
            "workflow_id": "w1",
            "insight_id": "p1-i1",
            "blocks": [
                {"code": "x = 1", "reasoning": "setup", "derived_from": ["analysis/a.py"]}
            ],
            "language_hint": "python",
            "warnings": [],
        },
        "execution-report": {
            "workflow_id": "w1",
            "blocks": [
                {"status": "ok", "stdout": "", "stderr": "", "emitted_artifacts": []}
            ],
            "total_wall_clock": 0.1,
        },
        "validation-record": {
            "insight_id": "p1-i1",
            "verdict": "validated",
            "reason": None,
            "notes": "matches reported figure",
            "reviewer": "r-1",
            "decided_at": "2026-01-01T00:00:00+00:00",
        },
        "question": {
            "question_id": "q1",
            "insight_id": "p1-i1",
            "kind": "oeq",
            "question": "What changes in X?",
            "answer": "X expands.",
            "filter_status": "draft",
            "flags": [],
        },
        "filter-report": {
            "question_id": "q1",
            "outcomes": [
                {"model_id": "m1", "answer": "A", "correct": False},
                {"model_id": "m2", "answer": "B", "correct": False},
            ],
            "decision": "kept",
            "rule_applied": "mcq: discard iff both reference models exactly correct",
        },
        "triplet": {
            "triplet_id": "t1",
            "manifest": {"entries": [["d.csv", 100, "counts"]], "total_bytes": 100},
            "question_id": "q1",
            "kind": "oeq",
            "answer": "X expands.",
            "split_tags": ["full", "lite"],
        },
        "transcript": {
            "triplet_id": "t1",
            "run_index": 0,
            "events": [{"stage": "plan", "payload": "look at the data"}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5},
        },
        "verdict": {
            "answer_id": "t1/0",
            "judge_model_id": "judge-1",
            "rating": 3,
            "raw_completion": "<rating>3</rating>",
        },
        "report": {"report_type": "dataset-manifest", "paper_id": "p1",
                   "entries": [["d.csv", 100, "counts"]], "total_bytes": 100},
    }
