"""Run the four insight stages end to end with scripted (offline) models:
extraction, code description, file matching, and workflow generation.

Run:  python3 demos/02_insight_pipeline_offline.py
"""

import json
import re
import tempfile
from pathlib import Path

from benchsmith.fakes import ScriptedProvider
from benchsmith.gateway import LlmGateway, ModelSpec
from benchsmith.ingest import load_paper, snapshot_repository
from benchsmith.insights import SpecSet, run_insight_stage
from benchsmith.store import ArtifactStore

workdir = Path(tempfile.mkdtemp(prefix="benchsmith-demo-"))

# -- a toy corpus -------------------------------------------------------------
(workdir / "repo" / "analysis").mkdir(parents=True)
(workdir / "paper.md").write_text(
    "# Abstract\nWe profile a tissue across two conditions.\n"
    "# Results\nThe studied population expands under treatment.\n"
)
(workdir / "repo" / "analysis" / "load.py").write_text("def load():\n    return 'counts'\n")
(workdir / "repo" / "analysis" / "compare.py").write_text("def compare():\n    return 9 - 5\n")

# -- scripted model replies in the stage output formats -----------------------


def insight_reply(spec, text):
    count = int(re.search(r"generate (\d+) insights", text).group(1))
    blocks = []
    for i in range(1, count + 1):
        blocks.append(
            f"Insight #{i}\nSummary:\nFinding {i} about the expanding population.\n"
            f"How it was derived:\nAbundances were compared across conditions.\n"
            f"Relevant text paragraphs:\nThe population expands under treatment.\n"
        )
    return "\n".join(blocks)


def describe_reply(spec, text):
    paths = [p for p in re.findall(r"^### BEGIN (.+)$", text, flags=re.MULTILINE) if "<" not in p]
    return json.dumps({p: f"Implements one analysis step in {p}." for p in paths})


def match_reply(spec, text):
    paths = re.findall(r"^- (\S+): ", text, flags=re.MULTILINE)
    return json.dumps(paths[:2])


def workflow_reply(spec, text):
    return json.dumps({
        "code_blocks": [
            {"code": "<execute> shift = 9 - 5 </execute>",
             "reasoning": "compute the reported shift",
             "derived_from": ["analysis/compare.py"]},
            {"code": "<execute> print('shift =', shift) </execute>",
             "reasoning": "surface the value for review",
             "derived_from": ["analysis/compare.py"]},
        ]
    })


provider = ScriptedProvider([
    ("carefully review the article below", insight_reply),
    ("Return one JSON dictionary whose keys are the exact file paths", describe_reply),
    ("Return only a valid Python list of up to 5 string file paths", match_reply),
    ("structured JSON output", workflow_reply),
])

gateway = LlmGateway({"fake": provider}, cache_dir=workdir / "cache")
store = ArtifactStore(workdir / "store")
spec = ModelSpec(provider="fake", model_id="demo-model")

paper = load_paper(workdir / "paper.md")
snapshot = snapshot_repository(workdir / "repo")
results = run_insight_stage(paper, snapshot, SpecSet(spec, spec), gateway, store, count=3)

for result in results:
    blocks = len(result.bundle.blocks) if result.bundle else 0
    print(f"{result.insight.insight_id}: rank {result.insight.rank}, {blocks} workflow blocks")

print("\nprovider calls:", len(provider.calls))
run_insight_stage(paper, snapshot, SpecSet(spec, spec), gateway, store, count=3)
print("provider calls after cached re-run:", len(provider.calls), "(unchanged)")
