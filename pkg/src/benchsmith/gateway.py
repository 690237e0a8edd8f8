"""Provider-agnostic chat-completion access with retries, caching, bounded
parallelism, and the tag-extraction helpers every LLM-facing stage uses."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .store import canonical_bytes

logger = logging.getLogger(__name__)

# Which providers advertise a thinking/extended-reasoning mode. Extend via
# the providers config file; this is the built-in fallback table.
PROVIDER_CAPABILITIES = {
    "openai": {"thinking": False},
    "anthropic": {"thinking": True},
    "google": {"thinking": True},
    "openrouter": {"thinking": True},
    "fake": {"thinking": True},
}

DEFAULT_RETRY_LIMIT = 5
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_BACKOFF_CAP = 60.0
DEFAULT_TIMEOUT = 120.0


class GatewayError(Exception):
    pass


class RateLimited(GatewayError):
    """Provider throttled the request and retries are exhausted."""


class ProviderError(GatewayError):
    """Non-retryable provider failure (bad request, auth, 5xx treated fatal)."""


class GatewayTimeout(GatewayError):
    """Per-call wall-clock limit exceeded."""


class TagMissing(GatewayError):
    pass


class TagUnclosed(GatewayError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    provider: str
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    reasoning_mode: str = "default"  # or "thinking"

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.reasoning_mode not in ("default", "thinking"):
            raise ValueError(f"unknown reasoning mode {self.reasoning_mode!r}")
        if self.reasoning_mode == "thinking":
            caps = PROVIDER_CAPABILITIES.get(self.provider, {})
            if not caps.get("thinking", False):
                raise ValueError(f"provider {self.provider!r} does not advertise thinking mode")

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "reasoning_mode": self.reasoning_mode,
        }


@dataclass
class PromptBundle:
    user_turns: list[str]
    system: str | None = None
    attachments: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.user_turns:
            raise ValueError("at least one user turn required")
        self.attachments = [tuple(a) for a in self.attachments]

    def rendered_length(self) -> int:
        return self.render_messages().total_chars()

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "user_turns": list(self.user_turns),
            "attachments": [list(a) for a in self.attachments],
        }

    def render_messages(self) -> "RenderedPrompt":
        """Flatten to chat messages; attachments are inlined into the final turn."""
        turns = list(self.user_turns)
        if self.attachments:
            blocks = [turns[-1]]
            for name, text in self.attachments:
                blocks.append(f"--- {name} ---\n{text}")
            turns[-1] = "\n\n".join(blocks)
        messages = []
        if self.system:
            messages.append({"role": "system", "content": self.system})
        for turn in turns:
            messages.append({"role": "user", "content": turn})
        return RenderedPrompt(messages=messages)


@dataclass
class RenderedPrompt:
    messages: list[dict]

    def values_concat(self) -> list[str]:
        return [m["content"] for m in self.messages]

    def total_chars(self) -> int:
        return sum(len(c) for c in self.values_concat())


@dataclass
class Completion:
    text: str
    usage: tuple[int, int]  # (prompt_tokens, completion_tokens)
    cache_hit: bool
    attempts: int


class TransientProviderFailure(Exception):
    """Internal marker for retryable failures (throttle, transient network)."""


class ChatProvider:
    """Interface a provider backend implements: one blocking chat call."""

    def send(self, spec: ModelSpec, messages: list[dict], timeout: float) -> tuple[str, tuple[int, int]]:
        raise NotImplementedError


class HttpChatProvider(ChatProvider):
    """Chat-completion HTTP backend (OpenAI-compatible request/response shape)."""

    def __init__(self, base_url: str, api_key_env: str):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env

    def send(self, spec: ModelSpec, messages: list[dict], timeout: float) -> tuple[str, tuple[int, int]]:
        import requests

        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise ProviderError(f"credentials missing: set {self.api_key_env}")
        body = {
            "model": spec.model_id,
            "messages": messages,
            "temperature": spec.temperature,
            "max_tokens": spec.max_output_tokens,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=timeout,
            )
        except requests.Timeout as exc:
            raise GatewayTimeout(str(exc)) from exc
        except requests.ConnectionError as exc:
            raise TransientProviderFailure(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code in (500, 502, 503, 504):
            raise TransientProviderFailure(f"status {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"status {resp.status_code}: {resp.text[:500]}")
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
        usage = data.get("usage", {})
        return text, (usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))


def load_providers_config(path: str | Path) -> dict[str, ChatProvider]:
    """Providers config file: {"name": {"base_url": ..., "api_key_env": ...}}."""
    config = json.loads(Path(path).read_text("utf-8"))
    providers = {}
    for name, entry in config.items():
        providers[name] = HttpChatProvider(entry["base_url"], entry["api_key_env"])
        if "thinking" in entry:
            PROVIDER_CAPABILITIES.setdefault(name, {})["thinking"] = bool(entry["thinking"])
    return providers


class CompletionCache:
    """Persistent request->completion cache, keyed by the digest of the
    canonical (spec, prompt) serialization. Lives under the store root so
    cached completions travel with the artifacts they produced."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def key(self, spec: ModelSpec, prompt: PromptBundle) -> str:
        blob = canonical_bytes({"spec": spec.to_dict(), "prompt": prompt.to_dict()})
        return hashlib.sha256(blob).hexdigest()

    def get(self, key: str) -> dict | None:
        path = self.root / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))

    def put(self, key: str, text: str, usage: tuple[int, int]) -> None:
        path = self.root / f"{key}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"text": text, "usage": list(usage)}, ensure_ascii=False) + "\n",
            "utf-8",
        )
        tmp.rename(path)


class LlmGateway:
    """complete()/complete_many() front door used by every pipeline stage."""

    def __init__(
        self,
        providers: dict[str, ChatProvider],
        cache_dir: str | Path | None = None,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        backoff_cap: float = DEFAULT_BACKOFF_CAP,
        call_timeout: float = DEFAULT_TIMEOUT,
        use_cache: bool = True,
        sleep_fn=time.sleep,
        rng: random.Random | None = None,
    ):
        self.providers = providers
        self.cache = CompletionCache(cache_dir) if (cache_dir and use_cache) else None
        self.retry_limit = retry_limit
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.call_timeout = call_timeout
        self._sleep = sleep_fn
        self._rng = rng or random.Random()

    def complete(self, spec: ModelSpec, prompt: PromptBundle, use_cache: bool = True) -> Completion:
        cache_key = None
        if self.cache is not None and use_cache:
            cache_key = self.cache.key(spec, prompt)
            hit = self.cache.get(cache_key)
            if hit is not None:
                return Completion(text=hit["text"], usage=tuple(hit["usage"]), cache_hit=True, attempts=0)

        provider = self.providers.get(spec.provider)
        if provider is None:
            raise ProviderError(f"no provider configured for {spec.provider!r}")

        rendered = prompt.render_messages()
        logger.debug("dispatching %d chars to %s/%s", rendered.total_chars(), spec.provider, spec.model_id)

        attempts = 0
        while True:
            attempts += 1
            try:
                text, usage = provider.send(spec, rendered.messages, self.call_timeout)
                break
            except TransientProviderFailure as exc:
                if attempts > self.retry_limit:
                    raise RateLimited(f"retries exhausted after {attempts} attempts: {exc}") from exc
                delay = min(self.backoff_cap, self.backoff_base * (2 ** (attempts - 1)))
                delay *= 0.5 + self._rng.random()  # jitter in [0.5x, 1.5x)
                self._sleep(delay)

        if cache_key is not None:
            self.cache.put(cache_key, text, usage)
        return Completion(text=text, usage=usage, cache_hit=False, attempts=attempts)

    def complete_many(
        self,
        requests: list[tuple[ModelSpec, PromptBundle]],
        max_in_flight: int = 4,
        use_cache: bool = True,
    ) -> list[Completion | GatewayError]:
        """Run requests with at most max_in_flight provider calls outstanding.
        Results align positionally with requests; failures stay per-element."""
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not requests:
            return []

        def run_one(req):
            spec, prompt = req
            try:
                return self.complete(spec, prompt, use_cache=use_cache)
            except GatewayError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(run_one, requests))


_TAG_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


def extract_tagged(text: str, tag_name: str) -> str:
    """Content between the first <tag>...</tag> pair, whitespace-trimmed."""
    if not _TAG_NAME_RE.match(tag_name):
        raise ValueError(f"tag name must be a bare identifier, got {tag_name!r}")
    open_tag, close_tag = f"<{tag_name}>", f"</{tag_name}>"
    start = text.find(open_tag)
    if start == -1:
        raise TagMissing(f"no <{tag_name}> tag in text")
    start += len(open_tag)
    end = text.find(close_tag, start)
    if end == -1:
        raise TagUnclosed(f"<{tag_name}> opened but never closed")
    return text[start:end].strip()


def extract_tagged_last(text: str, tag_name: str) -> str:
    """Like extract_tagged, but the last complete pair wins."""
    if not _TAG_NAME_RE.match(tag_name):
        raise ValueError(f"tag name must be a bare identifier, got {tag_name!r}")
    open_tag, close_tag = f"<{tag_name}>", f"</{tag_name}>"
    if open_tag not in text:
        raise TagMissing(f"no <{tag_name}> tag in text")
    start = text.rfind(open_tag)
    end = text.find(close_tag, start + len(open_tag))
    if end == -1:
        # the final open tag is unclosed; fall back to the last closed pair
        end = text.rfind(close_tag)
        if end == -1:
            raise TagUnclosed(f"<{tag_name}> opened but never closed")
        start = text.rfind(open_tag, 0, end)
        if start == -1:
            raise TagUnclosed(f"<{tag_name}> opened but never closed")
    return text[start + len(open_tag):end].strip()
