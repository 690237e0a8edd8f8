"""Load papers into prioritized sections, snapshot code repositories into
delimited bundles, and build dataset manifests including the size-based
lite split."""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

# "MB" read as decimal megabytes; override per deployment if needed.
LITE_LIMIT_BYTES = 750 * 10**6
PER_FILE_CAP_BYTES = 1_000_000

DEFAULT_CODE_EXTENSIONS = (
    ".py", ".r", ".R", ".rmd", ".Rmd", ".ipynb", ".jl", ".sh", ".m", ".pl",
)

# Heading keywords, highest priority first: abstract-like sections, then
# results, figure legends, discussion, methods. Everything else trails in
# document order.
_PRIORITY_KEYWORDS = ("abstract", "result", "figure", "discussion", "method")


class IngestError(Exception):
    pass


class EmptyDocument(IngestError):
    pass


class UnreadablePath(IngestError):
    pass


class NotADirectory(IngestError):
    pass


class UnknownPath(IngestError):
    pass


class MissingFile(IngestError):
    pass


class DelimiterCollision(IngestError):
    """A file's content contains a line that clashes with the bundle markers."""


@dataclass
class PaperDocument:
    paper_id: str
    sections: list[tuple[str, str]]  # (heading, body)
    priority_order: list[int]

    def prioritized_text(self) -> str:
        parts = []
        for idx in self.priority_order:
            heading, body = self.sections[idx]
            parts.append(f"# {heading}\n{body}")
        return "\n\n".join(parts)

    def to_payload(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "sections": [list(s) for s in self.sections],
            "priority_order": list(self.priority_order),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "PaperDocument":
        return cls(
            paper_id=payload["paper_id"],
            sections=[tuple(s) for s in payload["sections"]],
            priority_order=list(payload["priority_order"]),
        )


@dataclass
class RepositorySnapshot:
    repo_id: str
    files: list[tuple[str, str, int]]  # (relative path, content, byte size)
    tree_rendering: str

    def paths(self) -> list[str]:
        return [p for p, _, _ in self.files]

    def content_of(self, path: str) -> str:
        for p, content, _ in self.files:
            if p == path:
                return content
        raise UnknownPath(path)

    def to_payload(self) -> dict:
        return {
            "repo_id": self.repo_id,
            "files": [list(f) for f in self.files],
            "tree_rendering": self.tree_rendering,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RepositorySnapshot":
        return cls(
            repo_id=payload["repo_id"],
            files=[tuple(f) for f in payload["files"]],
            tree_rendering=payload["tree_rendering"],
        )


@dataclass
class DatasetManifest:
    entries: list[tuple[str, int, str]] = field(default_factory=list)  # (path, bytes, description)

    @property
    def total_bytes(self) -> int:
        return sum(size for _, size, _ in self.entries)

    def paths(self) -> list[str]:
        return [p for p, _, _ in self.entries]

    def to_payload(self) -> dict:
        return {"entries": [list(e) for e in self.entries], "total_bytes": self.total_bytes}

    @classmethod
    def from_payload(cls, payload: dict) -> "DatasetManifest":
        return cls(entries=[tuple(e) for e in payload["entries"]])


_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*\S)\s*$")


def load_paper(path: str | Path, paper_id: str | None = None) -> PaperDocument:
    """Split a text/markdown paper into sections and rank them for reading."""
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadablePath(f"{path}: {exc}") from exc
    if not text.strip():
        raise EmptyDocument(str(path))

    sections: list[tuple[str, list[str]]] = []
    current_heading = None
    current_lines: list[str] = []
    for line in text.splitlines():
        match = _HEADING_RE.match(line)
        if match:
            if current_heading is not None or any(l.strip() for l in current_lines):
                sections.append((current_heading or "body", current_lines))
            current_heading = match.group(2)
            current_lines = []
        else:
            current_lines.append(line)
    sections.append((current_heading or "body", current_lines))

    cleaned = [
        (heading, "\n".join(lines).strip())
        for heading, lines in sections
        if "\n".join(lines).strip()
    ]
    if not cleaned:
        raise EmptyDocument(str(path))

    def priority_rank(heading: str) -> int:
        lowered = heading.lower()
        for rank, keyword in enumerate(_PRIORITY_KEYWORDS):
            if keyword in lowered:
                return rank
        return len(_PRIORITY_KEYWORDS)

    order = sorted(range(len(cleaned)), key=lambda i: (priority_rank(cleaned[i][0]), i))
    return PaperDocument(
        paper_id=paper_id or path.stem,
        sections=cleaned,
        priority_order=order,
    )


def _looks_binary(chunk: bytes) -> bool:
    return b"\x00" in chunk


def snapshot_repository(
    root: str | Path,
    extension_filter: tuple[str, ...] = DEFAULT_CODE_EXTENSIONS,
    per_file_cap: int = PER_FILE_CAP_BYTES,
    repo_id: str | None = None,
) -> RepositorySnapshot:
    """Snapshot files matching the extension filter, skipping binaries and
    oversized files. Paths use forward slashes and sort lexicographically."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectory(str(root))
    lowered_exts = {e.lower() for e in extension_filter}

    collected: list[tuple[str, str, int]] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = [d for d in dirnames if not d.startswith(".")]
        for name in filenames:
            full = Path(dirpath) / name
            if full.suffix.lower() not in lowered_exts:
                continue
            size = full.stat().st_size
            if size > per_file_cap:
                logger.warning("skipping %s: %d bytes over per-file cap", full, size)
                continue
            raw = full.read_bytes()
            if _looks_binary(raw[:8192]):
                logger.warning("skipping %s: binary content", full)
                continue
            rel = full.relative_to(root).as_posix()
            collected.append((rel, raw.decode("utf-8", errors="replace"), size))

    collected.sort(key=lambda f: f[0])
    return RepositorySnapshot(
        repo_id=repo_id or root.name,
        files=collected,
        tree_rendering=render_tree([p for p, _, _ in collected]),
    )


def render_tree(paths: list[str]) -> str:
    """Directory-tree text rendering of the included paths."""
    lines: list[str] = []
    seen_dirs: set[str] = set()
    for path in sorted(paths):
        parts = path.split("/")
        for depth in range(len(parts) - 1):
            prefix = "/".join(parts[: depth + 1])
            if prefix not in seen_dirs:
                seen_dirs.add(prefix)
                lines.append("  " * depth + parts[depth] + "/")
        lines.append("  " * (len(parts) - 1) + parts[-1])
    return "\n".join(lines)


BEGIN_MARKER = "### BEGIN "
END_MARKER = "### END "


def bundle_sources(snapshot: RepositorySnapshot, selection: list[str]) -> str:
    """Concatenate selected files between byte-exact BEGIN/END marker lines.

    Downstream prompts parse this format, so a file whose own content collides
    with the markers is rejected rather than silently corrupting the bundle.
    """
    known = set(snapshot.paths())
    chunks: list[str] = []
    for path in selection:
        if path not in known:
            raise UnknownPath(path)
        content = snapshot.content_of(path)
        for line in content.splitlines():
            if line.startswith(BEGIN_MARKER) or line.startswith(END_MARKER):
                raise DelimiterCollision(f"{path} contains a bundle marker line: {line!r}")
        if content and not content.endswith("\n"):
            content += "\n"
        chunks.append(f"{BEGIN_MARKER}{path}\n{content}{END_MARKER}{path}\n")
    return "".join(chunks)


def parse_bundle(bundle: str) -> list[tuple[str, str]]:
    """Inverse of bundle_sources for contents lacking marker lines."""
    out: list[tuple[str, str]] = []
    lines = bundle.split("\n")
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.startswith(BEGIN_MARKER):
            if line.strip():
                raise IngestError(f"unexpected content outside blocks: {line!r}")
            i += 1
            continue
        path = line[len(BEGIN_MARKER):]
        end_line = f"{END_MARKER}{path}"
        body: list[str] = []
        i += 1
        while i < len(lines) and lines[i] != end_line:
            body.append(lines[i])
            i += 1
        if i == len(lines):
            raise IngestError(f"unterminated block for {path}")
        content = "\n".join(body)
        if body:
            content += "\n"
        out.append((path, content))
        i += 1
    return out


def build_dataset_manifest(paths_with_descriptions: list[tuple[str, str]]) -> DatasetManifest:
    """Record filesystem sizes for (path, description) pairs."""
    entries = []
    for path, description in paths_with_descriptions:
        p = Path(path)
        if not p.is_file():
            raise MissingFile(str(path))
        entries.append((str(path), p.stat().st_size, description))
    return DatasetManifest(entries=entries)


def select_lite(triplets: list[dict], size_limit_bytes: int = LITE_LIMIT_BYTES) -> list[dict]:
    """Keep exactly the triplets whose manifest total is strictly under the limit."""
    return [t for t in triplets if t["manifest"]["total_bytes"] < size_limit_bytes]
