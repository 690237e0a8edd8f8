"""Drive the reference agent with scripted models and compare critic
placements: none, after the first plan, and at the end of the analysis.

Run:  python3 demos/04_agent_loop.py
"""

import tempfile
from pathlib import Path

from benchsmith.agent import AgentConfig, CriticConfig, run_episode
from benchsmith.fakes import ScriptedProvider
from benchsmith.gateway import LlmGateway, ModelSpec
from benchsmith.sandbox import SandboxLimits

workdir = Path(tempfile.mkdtemp(prefix="agent-demo-"))
data = workdir / "counts.csv"
data.write_text("gene,control,treated\nG1,5,9\n")

triplet = {
    "triplet_id": "demo-t1",
    "manifest": {"entries": [[str(data), data.stat().st_size, "toy counts"]],
                 "total_bytes": data.stat().st_size},
    "question_id": "demo-q1",
    "kind": "oeq",
    "question": {"question_id": "demo-q1", "kind": "oeq",
                 "question": "What changes across conditions?", "answer": "G1 rises."},
    "answer": "G1 rises.",
    "split_tags": ["full"],
}


def planner(spec, text):
    if "out of steps" in text:
        return "<solution>G1 rises from 5 to 9 under treatment.</solution>"
    if "[your previous reply]" not in text:
        return "<plan>1. read the table\n2. compare columns\n3. answer</plan>"
    if "[reviewer feedback on your analysis]" in text and text.count("[execution feedback]") < 2:
        return "<execute>print('double-checking the comparison')</execute>"
    if text.count("[execution feedback]") < 1:
        return "<execute>print(open(adata).read())</execute>"
    return "<solution>G1 rises from 5 to 9 under treatment.</solution>"


def gateway():
    return LlmGateway({
        "planner": ScriptedProvider([("", planner)]),
        "critic": ScriptedProvider([("", "compare both genes, not just the first")]),
    }, sleep_fn=lambda s: None)


PLANNER = ModelSpec(provider="planner", model_id="demo-planner")
CRITIC = ModelSpec(provider="critic", model_id="demo-critic")
limits = SandboxLimits(per_block_seconds=5, total_seconds=30)

for label, critic in [
    ("no critic", None),
    ("plan-critic", CriticConfig(placement="plan", spec=CRITIC)),
    ("end-critic", CriticConfig(placement="end", spec=CRITIC)),
]:
    config = AgentConfig(planner=PLANNER, critic=critic, max_steps=4)
    transcript, answer = run_episode(
        triplet, config, gateway(), session_root=workdir / "sessions", limits=limits
    )
    print(f"{label:12s} events: {' -> '.join(transcript.stages())}")
    print(f"{'':12s} answer: {answer.content!r} ({answer.status})\n")
