"""Scripted provider backends for offline runs, demos, and tests.

These speak the same ChatProvider interface as the HTTP backend, so the
whole pipeline can run end to end with zero network calls.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .gateway import ChatProvider, ModelSpec, ProviderError, TransientProviderFailure


def _flatten(messages: list[dict]) -> str:
    return "\n".join(m["content"] for m in messages)


@dataclass
class Rule:
    needle: str
    response: object  # str or callable(spec, full_prompt_text) -> str


class ScriptedProvider(ChatProvider):
    """Answers by matching substrings of the rendered prompt against rules.

    Rules are checked in registration order; the first match wins. A rule's
    response may be a string or a callable receiving (spec, prompt_text).
    """

    def __init__(self, rules: list[tuple[str, object]] | None = None,
                 usage: tuple[int, int] = (100, 50)):
        self.rules: list[Rule] = [Rule(n, r) for n, r in (rules or [])]
        self.usage = usage
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def add(self, needle: str, response) -> "ScriptedProvider":
        self.rules.append(Rule(needle, response))
        return self

    def send(self, spec: ModelSpec, messages: list[dict], timeout: float):
        text = _flatten(messages)
        with self._lock:
            self.calls.append(text)
        for rule in self.rules:
            if rule.needle in text:
                body = rule.response(spec, text) if callable(rule.response) else rule.response
                return body, self.usage
        raise ProviderError(f"no scripted rule matches prompt starting {text[:120]!r}")


class QueueProvider(ChatProvider):
    """Returns canned responses in FIFO order, one per call."""

    def __init__(self, responses: list[str], usage: tuple[int, int] = (100, 50)):
        self.responses = list(responses)
        self.usage = usage
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, spec: ModelSpec, messages: list[dict], timeout: float):
        with self._lock:
            self.calls += 1
            if not self.responses:
                raise ProviderError("queue provider exhausted")
            return self.responses.pop(0), self.usage


class FlakyProvider(ChatProvider):
    """Throttles the first `failures` calls, then delegates."""

    def __init__(self, inner: ChatProvider, failures: int):
        self.inner = inner
        self.remaining = failures

    def send(self, spec: ModelSpec, messages: list[dict], timeout: float):
        if self.remaining > 0:
            self.remaining -= 1
            raise TransientProviderFailure("throttled")
        return self.inner.send(spec, messages, timeout)


@dataclass
class ConcurrencyProbe(ChatProvider):
    """Wraps a provider and records the peak number of in-flight calls."""

    inner: ChatProvider
    hold_seconds: float = 0.01
    in_flight: int = 0
    peak: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def send(self, spec: ModelSpec, messages: list[dict], timeout: float):
        import time

        with self._lock:
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            time.sleep(self.hold_seconds)
            return self.inner.send(spec, messages, timeout)
        finally:
            with self._lock:
                self.in_flight -= 1
