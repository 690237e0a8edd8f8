from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchsmith.fakes import ConcurrencyProbe, FlakyProvider, QueueProvider, ScriptedProvider
from benchsmith.gateway import (
    Completion,
    GatewayError,
    LlmGateway,
    ModelSpec,
    PromptBundle,
    ProviderError,
    RateLimited,
    TagMissing,
    TagUnclosed,
    extract_tagged,
    extract_tagged_last,
)

SPEC = ModelSpec(provider="fake", model_id="fake-1")


def make_gateway(provider, tmp_path=None, **kwargs):
    cache_dir = tmp_path / "cache" if tmp_path else None
    kwargs.setdefault("sleep_fn", lambda s: None)
    return LlmGateway({"fake": provider}, cache_dir=cache_dir, **kwargs)


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(provider="fake", model_id="")
    with pytest.raises(ValueError):
        ModelSpec(provider="fake", model_id="m", temperature=-1)
    with pytest.raises(ValueError):
        ModelSpec(provider="openai", model_id="m", reasoning_mode="thinking")
    ModelSpec(provider="anthropic", model_id="m", reasoning_mode="thinking")


def test_prompt_bundle_requires_user_turn():
    with pytest.raises(ValueError):
        PromptBundle(user_turns=[])


def test_attachments_inlined_into_final_turn():
    bundle = PromptBundle(user_turns=["first", "second"], attachments=[("notes.txt", "hello")])
    messages = bundle.render_messages().messages
    assert messages[-1]["content"].startswith("second")
    assert "notes.txt" in messages[-1]["content"]
    assert "hello" in messages[-1]["content"]
    assert bundle.rendered_length() > len("first") + len("second")


def test_cache_hit_has_zero_attempts(tmp_path):
    provider = QueueProvider(["answer-1", "answer-2"])
    gw = make_gateway(provider, tmp_path)
    prompt = PromptBundle(user_turns=["what is up"])
    first = gw.complete(SPEC, prompt)
    assert (first.cache_hit, first.attempts, first.text) == (False, 1, "answer-1")
    second = gw.complete(SPEC, prompt)
    assert (second.cache_hit, second.attempts, second.text) == (True, 0, "answer-1")
    assert provider.calls == 1


def test_cache_keys_differ_when_spec_differs(tmp_path):
    provider = QueueProvider(["a", "b"])
    gw = make_gateway(provider, tmp_path)
    prompt = PromptBundle(user_turns=["same prompt"])
    hot = ModelSpec(provider="fake", model_id="fake-1", temperature=1.0)
    assert gw.complete(SPEC, prompt).text == "a"
    assert gw.complete(hot, prompt).text == "b"


def test_no_cache_bypass(tmp_path):
    provider = QueueProvider(["a", "b"])
    gw = make_gateway(provider, tmp_path)
    prompt = PromptBundle(user_turns=["same prompt"])
    gw.complete(SPEC, prompt)
    again = gw.complete(SPEC, prompt, use_cache=False)
    assert again.cache_hit is False
    assert again.text == "b"


def test_retry_then_success():
    provider = FlakyProvider(QueueProvider(["finally"]), failures=3)
    gw = make_gateway(provider, retry_limit=5)
    result = gw.complete(SPEC, PromptBundle(user_turns=["hi"]))
    assert result.attempts == 4
    assert result.text == "finally"


def test_retries_exhausted_raises_rate_limited():
    provider = FlakyProvider(QueueProvider(["never"]), failures=99)
    gw = make_gateway(provider, retry_limit=2)
    with pytest.raises(RateLimited):
        gw.complete(SPEC, PromptBundle(user_turns=["hi"]))
    # 1 initial + 2 retries
    assert provider.remaining == 99 - 3


def test_complete_many_bounded_concurrency():
    probe = ConcurrencyProbe(QueueProvider([f"r{i}" for i in range(10)]))
    gw = LlmGateway({"fake": probe}, sleep_fn=lambda s: None)
    requests = [(SPEC, PromptBundle(user_turns=[f"q{i}"])) for i in range(10)]
    results = gw.complete_many(requests, max_in_flight=3)
    assert len(results) == 10
    assert all(isinstance(r, Completion) for r in results)
    assert probe.peak <= 3


def test_complete_many_positional_errors():
    provider = ScriptedProvider([("good", "fine")])
    gw = make_gateway(provider)
    requests = [
        (SPEC, PromptBundle(user_turns=["good 1"])),
        (SPEC, PromptBundle(user_turns=["this one breaks"])),
        (SPEC, PromptBundle(user_turns=["good 2"])),
    ]
    results = gw.complete_many(requests, max_in_flight=2)
    assert results[0].text == "fine"
    assert isinstance(results[1], ProviderError)
    assert results[2].text == "fine"


def test_complete_many_empty():
    gw = make_gateway(QueueProvider([]))
    assert gw.complete_many([], max_in_flight=3) == []


def test_extract_tagged_examples():
    assert extract_tagged("<rating>3</rating>", "rating") == "3"
    assert extract_tagged("<solution>A,C</solution>", "solution") == "A,C"
    assert extract_tagged("pre <x> padded </x> post", "x") == "padded"


def test_extract_tagged_errors():
    with pytest.raises(TagMissing):
        extract_tagged("no tags here", "rating")
    with pytest.raises(TagUnclosed):
        extract_tagged("<rating>3", "rating")
    with pytest.raises(ValueError):
        extract_tagged("<a b>x</a b>", "a b")


def test_extract_tagged_first_pair_wins():
    text = "<rating>1</rating> then <rating>5</rating>"
    assert extract_tagged(text, "rating") == "1"
    assert extract_tagged_last(text, "rating") == "5"


def test_extract_tagged_last_ignores_trailing_unclosed():
    text = "<solution>A</solution> <solution>B"
    assert extract_tagged_last(text, "solution") == "A"


@settings(max_examples=100, deadline=None)
@given(st.text().filter(lambda s: "<tag>" not in s and "</tag>" not in s))
def test_extract_tagged_round_trip(inner):
    wrapped = f"<tag>{inner}</tag>"
    assert extract_tagged(wrapped, "tag") == inner.strip()
