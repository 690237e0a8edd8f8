"""Parent side of the workflow sandbox: one child interpreter process per
workflow, blocks fed over a line protocol, per-block and total wall-clock
limits, and emitted-file attribution per block."""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import sys
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .ingest import DatasetManifest
from .insights import WorkflowBundle

logger = logging.getLogger(__name__)

DEFAULT_PREAMBLE = (
    "DATASET_PATHS = {paths!r}\n"
    "adata = DATASET_PATHS[0] if DATASET_PATHS else None\n"
)


class SandboxError(Exception):
    pass


class InterpreterMissing(SandboxError):
    pass


class SandboxSetupFailure(SandboxError):
    pass


@dataclass
class SandboxLimits:
    per_block_seconds: float = 300.0
    total_seconds: float = 1800.0
    memory_mb: int | None = None


@dataclass
class InterpreterConfig:
    """Maps a workflow's language hint to a runner command and a preamble
    template; the preamble loads the dataset into the conventional variable
    before block 1 (deployments override it with a domain-specific loader)."""

    command: list[str]
    preamble_template: str = DEFAULT_PREAMBLE

    @classmethod
    def default_table(cls) -> dict[str, "InterpreterConfig"]:
        runner = str(Path(__file__).parent / "_runner.py")
        return {"python": cls(command=[sys.executable, "-u", runner])}

    @classmethod
    def load_table(cls, path: str | Path) -> dict[str, "InterpreterConfig"]:
        """Config file: {"hint": {"command": [...], "preamble_template": "..."}}."""
        table = dict(cls.default_table())
        raw = json.loads(Path(path).read_text("utf-8"))
        for hint, entry in raw.items():
            table[hint] = cls(
                command=list(entry["command"]),
                preamble_template=entry.get("preamble_template", DEFAULT_PREAMBLE),
            )
        return table


@dataclass
class BlockResult:
    status: str  # ok | error | timeout | not-run
    stdout: str = ""
    stderr: str = ""
    emitted_artifacts: list[str] = field(default_factory=list)  # session-relative


@dataclass
class ExecutionReport:
    workflow_id: str
    blocks: list[BlockResult]
    total_wall_clock: float
    session_dir: str

    def all_ok(self) -> bool:
        return all(b.status == "ok" for b in self.blocks)

    def to_payload(self) -> dict:
        return {
            "workflow_id": self.workflow_id,
            "blocks": [
                {
                    "status": b.status,
                    "stdout": b.stdout,
                    "stderr": b.stderr,
                    "emitted_artifacts": list(b.emitted_artifacts),
                }
                for b in self.blocks
            ],
            "total_wall_clock": self.total_wall_clock,
            "session_dir": self.session_dir,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "ExecutionReport":
        return cls(
            workflow_id=p["workflow_id"],
            blocks=[
                BlockResult(
                    status=b["status"],
                    stdout=b.get("stdout", ""),
                    stderr=b.get("stderr", ""),
                    emitted_artifacts=list(b.get("emitted_artifacts", [])),
                )
                for b in p["blocks"]
            ],
            total_wall_clock=p["total_wall_clock"],
            session_dir=p.get("session_dir", ""),
        )


class _SessionProcess:
    """Runner child plus a reader thread so replies can be awaited with a timeout."""

    def __init__(self, command: list[str], session_dir: Path):
        try:
            self.proc = subprocess.Popen(
                command + [str(session_dir)],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                cwd=str(session_dir),
            )
        except FileNotFoundError as exc:
            raise SandboxSetupFailure(f"interpreter command not found: {command[0]}") from exc
        self._lines: queue.Queue[str] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)

    def send(self, obj: dict) -> None:
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout: float) -> dict | None:
        try:
            return json.loads(self._lines.get(timeout=timeout))
        except queue.Empty:
            return None

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()

    def close(self):
        try:
            if self.proc.stdin and not self.proc.stdin.closed:
                self.proc.stdin.close()
        except OSError:
            pass
        self.kill()


def _list_files(session_dir: Path) -> set[str]:
    return {
        str(p.relative_to(session_dir))
        for p in session_dir.rglob("*")
        if p.is_file()
    }


def _allowed_read_roots(dataset: DatasetManifest) -> list[str]:
    roots = {sys.prefix, sys.base_prefix, sys.exec_prefix, "/usr", "/lib", "/etc", "/dev", "/proc"}
    roots.update(p for p in sys.path if p)
    for path in dataset.paths():
        roots.add(str(Path(path).resolve()))
    return sorted(roots)


class InteractiveSession:
    """A persistent interpreter session that runs blocks on demand. Used by
    workflow execution and by the agent loop's act stage."""

    def __init__(
        self,
        dataset: DatasetManifest,
        limits: SandboxLimits | None = None,
        session_root: str | Path = "sessions",
        interpreter: InterpreterConfig | None = None,
        label: str = "session",
    ):
        self.dataset = dataset
        self.limits = limits or SandboxLimits()
        self.interpreter = interpreter or InterpreterConfig.default_table()["python"]
        for path in dataset.paths():
            if not Path(path).exists():
                raise SandboxSetupFailure(f"dataset path missing: {path}")
        session_dir = Path(session_root) / f"{label}-{uuid.uuid4().hex[:8]}"
        session_dir.mkdir(parents=True, exist_ok=False)
        self.session_dir = session_dir.resolve()
        self._proc: _SessionProcess | None = None
        self._seen_files: set[str] = set()
        self._started = time.monotonic()
        self.dead = False

    def start(self) -> None:
        self._proc = _SessionProcess(self.interpreter.command, self.session_dir)
        self._proc.send({
            "session_dir": str(self.session_dir),
            "allowed_read_roots": _allowed_read_roots(self.dataset),
            "preamble": self.interpreter.preamble_template.format(
                paths=[str(Path(p).resolve()) for p in self.dataset.paths()]
            ),
            "memory_mb": self.limits.memory_mb,
            "deny_subprocess": True,
        })
        ready = self._proc.recv(
            timeout=min(self.limits.per_block_seconds, self.limits.total_seconds)
        )
        if ready is None:
            self._proc.kill()
            raise SandboxSetupFailure("runner did not come up within the block limit")
        if not ready.get("ready"):
            raise SandboxSetupFailure(f"preamble failed:\n{ready.get('error', '')}")
        self._started = time.monotonic()
        self._seen_files = _list_files(self.session_dir)

    def elapsed(self) -> float:
        return time.monotonic() - self._started

    def run_block(self, code: str) -> BlockResult:
        """Run one block in the shared namespace; timeouts kill the session."""
        if self._proc is None:
            raise SandboxError("session not started")
        if self.dead:
            return BlockResult(status="not-run", stderr="session terminated earlier")
        remaining = self.limits.total_seconds - self.elapsed()
        budget = min(self.limits.per_block_seconds, remaining)
        if budget <= 0:
            self.dead = True
            self._proc.kill()
            return BlockResult(status="timeout", stderr="total wall-clock budget exhausted")
        self._proc.send({"code": code})
        reply = self._proc.recv(timeout=budget)
        if reply is None:
            self.dead = True
            self._proc.kill()
            return BlockResult(status="timeout", stderr=f"block exceeded {budget:.1f}s limit")
        now_files = _list_files(self.session_dir)
        emitted = sorted(now_files - self._seen_files)
        self._seen_files = now_files
        return BlockResult(
            status="ok" if reply["ok"] else "error",
            stdout=reply.get("stdout", ""),
            stderr=reply.get("stderr", ""),
            emitted_artifacts=emitted,
        )

    def close(self) -> None:
        if self._proc is not None:
            self._proc.close()


def execute_workflow(
    bundle: WorkflowBundle,
    dataset: DatasetManifest,
    limits: SandboxLimits | None = None,
    session_root: str | Path = "sessions",
    interpreter_table: dict[str, InterpreterConfig] | None = None,
) -> ExecutionReport:
    """Run the bundle's blocks sequentially in one persistent interpreter
    session. Execution halts at the first non-ok block; later blocks are
    reported not-run. Block failures are data, not exceptions."""
    table = interpreter_table or InterpreterConfig.default_table()
    config = table.get(bundle.language_hint)
    if config is None:
        raise InterpreterMissing(f"no interpreter configured for {bundle.language_hint!r}")

    session = InteractiveSession(
        dataset=dataset,
        limits=limits,
        session_root=session_root,
        interpreter=config,
        label=bundle.workflow_id,
    )
    results: list[BlockResult] = [BlockResult(status="not-run") for _ in bundle.blocks]
    try:
        session.start()
        for i, block in enumerate(bundle.blocks):
            result = session.run_block(block.code)
            results[i] = result
            if result.status != "ok":
                break
    finally:
        session.close()

    return ExecutionReport(
        workflow_id=bundle.workflow_id,
        blocks=results,
        total_wall_clock=session.elapsed(),
        session_dir=str(session.session_dir),
    )
