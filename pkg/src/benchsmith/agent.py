"""Reference think/act/observe agent for answering benchmark triplets, with
a configurable planner model, optional critic (placed after the first plan
or at the end of the analysis), and an optional toolset retriever."""

from __future__ import annotations

import json
import logging
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import (
    LlmGateway,
    ModelSpec,
    PromptBundle,
    TagMissing,
    TagUnclosed,
    extract_tagged,
    extract_tagged_last,
)
from .ingest import DatasetManifest
from .questions import parse_letter_set, render_letter_set, FormatError as LetterFormatError
from .sandbox import InteractiveSession, InterpreterConfig, SandboxLimits
from .store import ArtifactStore, ProvenanceStamp
from . import prompts

logger = logging.getLogger(__name__)

CRITIC_APPROVAL = "APPROVED"
OBSERVATION_TAIL_CHARS = 4000  # long observations keep head + tail


class AgentError(Exception):
    pass


class MissingDataset(AgentError):
    pass


class MissingSolution(AgentError):
    pass


class InvalidLetters(AgentError):
    pass


# ---------------------------------------------------------------------------
# Tools
# ---------------------------------------------------------------------------


@dataclass
class Tool:
    name: str
    description: str
    kind: str = "builtin"  # builtin | command
    command: list[str] = field(default_factory=list)


BUILTIN_TOOLS = [
    Tool("run-code", "Run a code block in the shared analysis session and return its output."),
    Tool("list-files", "List the files in the working session and the dataset paths."),
    Tool("read-file-head", "Show the first lines of a file; argument is the file path."),
]


@dataclass
class ToolRegistry:
    tools: list[Tool] = field(default_factory=lambda: list(BUILTIN_TOOLS))

    def __post_init__(self):
        names = [t.name for t in self.tools]
        if len(set(names)) != len(names):
            raise AgentError(f"duplicate tool names in registry: {names}")

    def names(self) -> list[str]:
        return [t.name for t in self.tools]

    def get(self, name: str) -> Tool | None:
        for tool in self.tools:
            if tool.name == name:
                return tool
        return None

    def describe(self, subset: list[str] | None = None) -> str:
        tools = self.tools if subset is None else [t for t in self.tools if t.name in subset]
        return "\n".join(f"- {t.name}: {t.description}" for t in tools)

    @classmethod
    def load(cls, path: str | Path) -> "ToolRegistry":
        raw = json.loads(Path(path).read_text("utf-8"))
        extra = [
            Tool(
                name=entry["name"],
                description=entry.get("description", ""),
                kind=entry.get("kind", "command"),
                command=list(entry.get("command", [])),
            )
            for entry in raw.get("tools", [])
        ]
        return cls(tools=list(BUILTIN_TOOLS) + extra)


# ---------------------------------------------------------------------------
# Config and transcript types
# ---------------------------------------------------------------------------


@dataclass
class CriticConfig:
    placement: str  # plan | end
    spec: ModelSpec

    def __post_init__(self):
        if self.placement not in ("plan", "end"):
            raise AgentError(f"critic placement must be plan or end, got {self.placement!r}")


@dataclass
class AgentConfig:
    planner: ModelSpec
    critic: CriticConfig | None = None
    retriever: ModelSpec | None = None
    max_steps: int = 8
    registry: ToolRegistry = field(default_factory=ToolRegistry)

    def __post_init__(self):
        if self.max_steps < 1:
            raise AgentError("max_steps must be >= 1")

    @classmethod
    def load(cls, path: str | Path) -> "AgentConfig":
        raw = json.loads(Path(path).read_text("utf-8"))
        critic = None
        if raw.get("critic"):
            critic = CriticConfig(
                placement=raw["critic"]["placement"],
                spec=ModelSpec(**raw["critic"]["spec"]),
            )
        retriever = ModelSpec(**raw["retriever"]) if raw.get("retriever") else None
        registry = (
            ToolRegistry.load(raw["tool_registry"]) if raw.get("tool_registry") else ToolRegistry()
        )
        return cls(
            planner=ModelSpec(**raw["planner"]),
            critic=critic,
            retriever=retriever,
            max_steps=raw.get("max_steps", 8),
            registry=registry,
        )


@dataclass
class AgentTranscript:
    triplet_id: str
    run_index: int
    events: list[dict] = field(default_factory=list)  # {"stage", "payload"}
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def add(self, stage: str, payload: str) -> None:
        self.events.append({"stage": stage, "payload": payload})

    def stages(self) -> list[str]:
        return [e["stage"] for e in self.events]

    def count(self, stage: str) -> int:
        return sum(1 for e in self.events if e["stage"] == stage)

    def to_payload(self) -> dict:
        return {
            "triplet_id": self.triplet_id,
            "run_index": self.run_index,
            "events": list(self.events),
            "usage": {
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
            },
        }


@dataclass
class AgentAnswer:
    triplet_id: str
    run_index: int
    kind: str
    content: str | list[str]  # free text (oeq) or sorted letters (mcq)
    status: str  # complete | truncated

    def to_payload(self) -> dict:
        return {
            "triplet_id": self.triplet_id,
            "run_index": self.run_index,
            "kind": self.kind,
            "content": self.content,
            "status": self.status,
        }


# ---------------------------------------------------------------------------
# Prompt rendering and solution extraction
# ---------------------------------------------------------------------------


def render_task_prompt(triplet: dict) -> str:
    """Render the task prompt for a triplet; all manifest paths must exist."""
    paths = [entry[0] for entry in triplet["manifest"]["entries"]]
    for path in paths:
        if not Path(path).exists():
            raise MissingDataset(f"dataset path missing: {path}")
    data_paths = "\n".join(paths) if paths else "(no dataset files)"
    question = triplet["question"]
    if triplet["kind"] == "mcq":
        return prompts.AGENT_TASK_MCQ_TEMPLATE.format(
            data_paths=data_paths,
            question=question["stem"],
            options=prompts.format_options(question["options"]),
        )
    return prompts.AGENT_TASK_OEQ_TEMPLATE.format(
        data_paths=data_paths, question=question["question"]
    )


def extract_solution(text: str, kind: str, option_letters: list[str] | None = None):
    """Pull the final answer out of a model message. The last complete
    solution tag pair wins; MCQ content is split on commas, trimmed,
    uppercased, and validated against the option letters."""
    try:
        inner = extract_tagged_last(text, "solution")
    except (TagMissing, TagUnclosed) as exc:
        raise MissingSolution(str(exc)) from exc
    if kind == "oeq":
        return inner
    try:
        letters = parse_letter_set(inner)
    except LetterFormatError as exc:
        raise InvalidLetters(str(exc)) from exc
    allowed = set(option_letters or [])
    if not letters <= allowed:
        raise InvalidLetters(f"letters {sorted(letters)} outside options {sorted(allowed)}")
    return sorted(letters)


# ---------------------------------------------------------------------------
# Retriever
# ---------------------------------------------------------------------------


def retrieve_toolset(
    task_prompt: str,
    registry: ToolRegistry,
    spec: ModelSpec | None,
    gateway: LlmGateway,
    use_cache: bool = True,
) -> list[str]:
    """Select the tool subset surfaced to the planner. A disabled retriever
    surfaces the full registry; so does an empty selection after one repair."""
    if not registry.tools:
        raise AgentError("tool registry is empty")
    if spec is None:
        return registry.names()

    prompt = PromptBundle(user_turns=[prompts.RETRIEVER_TEMPLATE.format(
        task=task_prompt, tools=registry.describe()
    )])
    completion = gateway.complete(spec, prompt, use_cache=use_cache)

    def parse(text: str) -> list[str]:
        match = re.search(r"\[.*?\]", text, flags=re.DOTALL)
        if not match:
            return []
        try:
            names = json.loads(match.group(0))
        except json.JSONDecodeError:
            return []
        return [n for n in names if isinstance(n, str)]

    names = parse(completion.text)
    known = set(registry.names())
    unknown = [n for n in names if n not in known]
    for name in unknown:
        logger.warning("retriever proposed unknown tool %r; dropped", name)
    selection = [n for n in names if n in known]
    if not selection:
        repair = PromptBundle(user_turns=[
            prompts.RETRIEVER_TEMPLATE.format(task=task_prompt, tools=registry.describe()),
            "Your previous reply was not a JSON list of registry tool names. "
            "Reply with only such a list.",
        ])
        repaired = gateway.complete(spec, repair, use_cache=use_cache)
        selection = [n for n in parse(repaired.text) if n in known]
    if not selection:
        logger.warning("retriever selected nothing usable; falling back to the full registry")
        return registry.names()
    return selection


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------

_TOOL_CALL_RE = re.compile(r'<tool\s+name="([^"]+)"\s*>(.*?)</tool>', flags=re.DOTALL)


def _condense(text: str, limit: int = OBSERVATION_TAIL_CHARS) -> str:
    if len(text) <= limit:
        return text
    head, tail = text[: limit // 4], text[-3 * limit // 4:]
    return f"{head}\n... [{len(text) - limit} chars condensed] ...\n{tail}"


def _run_tool(tool: Tool, args: str, session: InteractiveSession,
              dataset: DatasetManifest) -> str:
    if tool.name == "run-code":
        result = session.run_block(args)
        return _render_block_result(result)
    if tool.name == "list-files":
        session_files = sorted(
            str(p.relative_to(session.session_dir))
            for p in session.session_dir.rglob("*") if p.is_file()
        )
        lines = ["session files:"] + [f"  {f}" for f in session_files]
        lines += ["dataset paths:"] + [f"  {p}" for p in dataset.paths()]
        return "\n".join(lines)
    if tool.name == "read-file-head":
        path = Path(args.strip())
        if not path.is_absolute():
            path = session.session_dir / path
        allowed = [session.session_dir] + [Path(p).resolve().parent for p in dataset.paths()]
        resolved = path.resolve()
        if not any(str(resolved).startswith(str(root)) for root in allowed):
            return f"error: {resolved} is outside the session and dataset paths"
        if not resolved.exists():
            return f"error: no such file: {resolved}"
        lines = resolved.read_text("utf-8", errors="replace").splitlines()[:20]
        return "\n".join(lines)
    if tool.kind == "command":
        try:
            proc = subprocess.run(
                tool.command + ([args] if args else []),
                capture_output=True, text=True, timeout=session.limits.per_block_seconds,
                cwd=str(session.session_dir),
            )
            return f"exit={proc.returncode}\n{proc.stdout}{proc.stderr}"
        except subprocess.TimeoutExpired:
            return "error: tool timed out"
    return f"error: tool {tool.name} has no invocation contract"


def _render_block_result(result) -> str:
    parts = [f"status={result.status}"]
    if result.stdout:
        parts.append(f"stdout:\n{result.stdout}")
    if result.stderr:
        parts.append(f"stderr:\n{result.stderr}")
    if result.emitted_artifacts:
        parts.append("new files: " + ", ".join(result.emitted_artifacts))
    return "\n".join(parts)


def run_episode(
    triplet: dict,
    config: AgentConfig,
    gateway: LlmGateway,
    session_root: str | Path = "sessions",
    interpreter: InterpreterConfig | None = None,
    limits: SandboxLimits | None = None,
    run_index: int = 0,
    use_cache: bool = False,
) -> tuple[AgentTranscript, AgentAnswer]:
    """One full think/act/observe episode over a triplet.

    Step failures become observations rather than errors; an exhausted step
    budget forces a final-answer request and yields a truncated answer.
    """
    transcript = AgentTranscript(triplet_id=triplet["triplet_id"], run_index=run_index)
    task_prompt = render_task_prompt(triplet)
    kind = triplet["kind"]
    option_letters = list(triplet["question"]["options"]) if kind == "mcq" else None

    surfaced = registry_names = config.registry.names()
    if config.retriever is not None:
        surfaced = retrieve_toolset(task_prompt, config.registry, config.retriever,
                                    gateway, use_cache=use_cache)
    transcript.add("retrieve", json.dumps({
        "retriever_enabled": config.retriever is not None,
        "surfaced_tools": surfaced,
        "registry_size": len(registry_names),
    }))

    system = prompts.PLANNER_SYSTEM_TEMPLATE.format(tools=config.registry.describe(surfaced))
    context: list[str] = [task_prompt]

    def planner_call(extra: str | None = None) -> str:
        turns = list(context) + ([extra] if extra else [])
        completion = gateway.complete(
            config.planner, PromptBundle(system=system, user_turns=turns), use_cache=use_cache
        )
        transcript.prompt_tokens += completion.usage[0]
        transcript.completion_tokens += completion.usage[1]
        if extra:
            context.append(extra)
        context.append(f"[your previous reply]\n{completion.text}")
        return completion.text

    def critic_call(template: str, **kwargs) -> str:
        completion = gateway.complete(
            config.critic.spec,
            PromptBundle(user_turns=[template.format(**kwargs)]),
            use_cache=use_cache,
        )
        transcript.prompt_tokens += completion.usage[0]
        transcript.completion_tokens += completion.usage[1]
        return completion.text

    dataset = DatasetManifest(entries=[tuple(e) for e in triplet["manifest"]["entries"]])
    session = InteractiveSession(
        dataset=dataset,
        limits=limits,
        session_root=session_root,
        interpreter=interpreter,
        label=f"agent-{triplet['triplet_id']}-r{run_index}",
    )
    session.start()

    acts = 0
    malformed = 0
    end_critic_fired = False
    final_text: str | None = None
    status = "complete"

    try:
        first = planner_call()
        try:
            plan = extract_tagged(first, "plan")
        except (TagMissing, TagUnclosed):
            plan = first.strip()
        transcript.add("plan", plan)

        if config.critic is not None and config.critic.placement == "plan":
            feedback = critic_call(prompts.CRITIC_PLAN_TEMPLATE, task=task_prompt, plan=plan)
            transcript.add("critique-plan", feedback)
            if feedback.strip() != CRITIC_APPROVAL:
                context.append(f"[reviewer feedback on your plan]\n{feedback}")

        if "<solution>" in first:
            final_text = first  # degenerate: answered inside the plan reply

        while final_text is None:
            if acts >= config.max_steps:
                status = "truncated"
                final_text = planner_call(prompts.FORCED_ANSWER_PROMPT)
                break
            reply = planner_call()
            if "<solution>" in reply:
                if (
                    config.critic is not None
                    and config.critic.placement == "end"
                    and not end_critic_fired
                ):
                    end_critic_fired = True
                    summary = _condense(
                        "\n\n".join(f"[{e['stage']}] {e['payload']}" for e in transcript.events)
                        + f"\n\n[proposed answer] {reply}"
                    )
                    feedback = critic_call(prompts.CRITIC_END_TEMPLATE,
                                           task=task_prompt, summary=summary)
                    transcript.add("critique-end", feedback)
                    if feedback.strip() != CRITIC_APPROVAL and acts < config.max_steps:
                        context.append(f"[reviewer feedback on your analysis]\n{feedback}")
                        continue  # planner may revise within the remaining budget
                final_text = reply
                break
            execute_match = re.search(r"<execute>(.*?)</execute>", reply, flags=re.DOTALL)
            tool_match = _TOOL_CALL_RE.search(reply)
            if execute_match or tool_match:
                acts += 1
                if execute_match:
                    code = execute_match.group(1).strip()
                    transcript.add("act", json.dumps({"tool": "run-code", "input": code}))
                    observation = _render_block_result(session.run_block(code))
                else:
                    name, args = tool_match.group(1), tool_match.group(2).strip()
                    transcript.add("act", json.dumps({"tool": name, "input": args}))
                    tool = config.registry.get(name)
                    if tool is None or name not in surfaced:
                        observation = f"error: tool {name!r} is not available"
                    else:
                        observation = _run_tool(tool, args, session, dataset)
                observation = _condense(observation)
                transcript.add("observe", observation)
                context.append(f"[execution feedback]\n{observation}")
            else:
                malformed += 1
                if malformed > 2:
                    status = "truncated"
                    final_text = planner_call(prompts.FORCED_ANSWER_PROMPT)
                    break
                context.append(
                    "[format reminder]\nUse <execute>, <tool name=\"...\">, or <solution> tags."
                )
    finally:
        session.close()

    try:
        content = extract_solution(final_text, kind, option_letters)
    except (MissingSolution, InvalidLetters):
        repaired = planner_call(prompts.REPAIR_SOLUTION_PROMPT)
        try:
            content = extract_solution(repaired, kind, option_letters)
        except (MissingSolution, InvalidLetters) as exc:
            logger.warning("episode %s/%d: no usable solution (%s)",
                           triplet["triplet_id"], run_index, exc)
            content = "" if kind == "oeq" else []
            status = "truncated"

    answer = AgentAnswer(
        triplet_id=triplet["triplet_id"],
        run_index=run_index,
        kind=kind,
        content=content,
        status=status,
    )
    rendered = content if isinstance(content, str) else render_letter_set(content)
    transcript.add("answer", rendered)
    return transcript, answer


def run_benchmark(
    triplets: list[dict],
    config: AgentConfig,
    gateway: LlmGateway,
    store: ArtifactStore | None = None,
    runs: int = 3,
    session_root: str | Path = "sessions",
    interpreter: InterpreterConfig | None = None,
    limits: SandboxLimits | None = None,
) -> dict[str, list[AgentAnswer]]:
    """Execute `runs` independent episodes per triplet (fresh sandbox and
    context each; planner caching disabled so runs stay independent),
    persisting all transcripts. Episode crashes become truncated answers."""
    if runs < 1:
        raise AgentError("runs must be >= 1")
    matrix: dict[str, list[AgentAnswer]] = {}
    for triplet in triplets:
        answers = []
        for run_index in range(runs):
            try:
                transcript, answer = run_episode(
                    triplet, config, gateway,
                    session_root=session_root, interpreter=interpreter,
                    limits=limits, run_index=run_index, use_cache=False,
                )
            except AgentError as exc:
                logger.warning("episode %s/%d failed: %s", triplet["triplet_id"], run_index, exc)
                transcript = AgentTranscript(triplet["triplet_id"], run_index)
                transcript.add("answer", "")
                answer = AgentAnswer(
                    triplet_id=triplet["triplet_id"], run_index=run_index,
                    kind=triplet["kind"],
                    content="" if triplet["kind"] == "oeq" else [],
                    status="truncated",
                )
            if store is not None:
                triplet_aid = store.put_artifact(
                    "triplet", triplet,
                    ProvenanceStamp(producer="run_benchmark", pipeline_stage="benchmark-assembly"),
                )
                payload = transcript.to_payload()
                payload["answer"] = answer.to_payload()
                store.put_artifact(
                    "transcript", payload,
                    ProvenanceStamp(producer="run_episode", pipeline_stage="agent-run",
                                    parent_ids=[triplet_aid], model_id=config.planner.model_id),
                )
            answers.append(answer)
        matrix[triplet["triplet_id"]] = answers
    return matrix
