"""LLM judges: the atomic-fact rubric for open-ended answers (1-5 rating)
and the relatedness judge used to validate insight extraction against
expert findings."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .gateway import LlmGateway, ModelSpec, PromptBundle, TagMissing, TagUnclosed, extract_tagged
from . import prompts

logger = logging.getLogger(__name__)


class JudgeError(Exception):
    pass


class MalformedVerdict(JudgeError):
    """No parseable rating, even after one reprompt."""


class OutOfRange(JudgeError):
    """Rating parsed but outside the scale."""


@dataclass
class JudgeVerdict:
    answer_id: str
    judge_model_id: str
    rating: int
    raw_completion: str

    def to_payload(self) -> dict:
        return {
            "answer_id": self.answer_id,
            "judge_model_id": self.judge_model_id,
            "rating": self.rating,
            "raw_completion": self.raw_completion,
        }


def _parse_rating(text: str) -> int:
    inner = extract_tagged(text, "rating")
    try:
        return int(inner)
    except ValueError as exc:
        raise MalformedVerdict(f"rating tag holds {inner!r}, not an integer") from exc


def _judged_rating(gateway: LlmGateway, spec: ModelSpec, prompt: PromptBundle) -> tuple[int, str]:
    completion = gateway.complete(spec, prompt)
    try:
        return _parse_rating(completion.text), completion.text
    except (TagMissing, TagUnclosed, MalformedVerdict):
        logger.warning("unparseable rating from %s; reprompting once", spec.model_id)
        repair = PromptBundle(
            system=prompt.system,
            user_turns=list(prompt.user_turns)
            + [prompts.REPAIR_RATING_TEMPLATE.format(previous=completion.text)],
        )
        repaired = gateway.complete(spec, repair)
        try:
            return _parse_rating(repaired.text), repaired.text
        except (TagMissing, TagUnclosed) as exc:
            raise MalformedVerdict(str(exc)) from exc


def judge_open_ended(
    agent_answer: str,
    ground_truth: str,
    judge_spec: ModelSpec,
    gateway: LlmGateway,
    answer_id: str = "",
    domain: str = prompts.DEFAULT_DOMAIN,
) -> JudgeVerdict:
    """Rate an open-ended answer against ground truth on the 1-5 rubric.

    The rubric asks the judge to decompose both texts into atomic facts and
    compare coverage; judging runs at temperature 0 so repeated calls are
    stable.
    """
    if not agent_answer.strip() or not ground_truth.strip():
        raise JudgeError("answer and ground truth must be non-empty")
    spec = judge_spec
    if spec.temperature != 0:
        spec = ModelSpec(
            provider=judge_spec.provider,
            model_id=judge_spec.model_id,
            temperature=0.0,
            max_output_tokens=judge_spec.max_output_tokens,
            reasoning_mode=judge_spec.reasoning_mode,
        )
    prompt = PromptBundle(
        system=prompts.JUDGE_SYSTEM_TEMPLATE.format(domain=domain),
        user_turns=[prompts.JUDGE_RUBRIC_TEMPLATE.format(
            domain=domain, answer=agent_answer, gt_answer=ground_truth
        )],
    )
    rating, raw = _judged_rating(gateway, spec, prompt)
    if rating not in (1, 2, 3, 4, 5):
        raise OutOfRange(f"rating {rating} outside 1..5")
    return JudgeVerdict(
        answer_id=answer_id, judge_model_id=spec.model_id, rating=rating, raw_completion=raw
    )


def judge_relatedness(
    generated_insights: list[str],
    expert_insight: str,
    judge_spec: ModelSpec,
    gateway: LlmGateway,
) -> tuple[int, str | None]:
    """Rate how related a batch of generated insights is to one expert
    finding: 3=strongly, 2=weakly, 1=unrelated. Returns (rating,
    explanation); a missing explanation is accepted with a warning."""
    if not generated_insights:
        raise JudgeError("generated insight list must be non-empty")
    prompt = PromptBundle(
        system=prompts.RELATEDNESS_SYSTEM,
        user_turns=[prompts.RELATEDNESS_TEMPLATE.format(
            generated="\n".join(f"- {g}" for g in generated_insights),
            expert=expert_insight,
        )],
    )
    rating, raw = _judged_rating(gateway, judge_spec, prompt)
    if rating not in (1, 2, 3):
        raise OutOfRange(f"relatedness rating {rating} outside 1..3")
    try:
        explanation = extract_tagged(raw, "explanation")
    except (TagMissing, TagUnclosed):
        logger.warning("relatedness judge returned no explanation tag; rating kept")
        explanation = None
    return rating, explanation
