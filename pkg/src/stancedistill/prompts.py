"""Prompt templates for zero-shot classification, rationale elicitation and
the unified instruction input format."""

from __future__ import annotations

import enum
import re

from .corpus import StanceLabel


class PromptKind(enum.Enum):
    ZERO_SHOT_CLASSIFY = "zero-shot-classify"
    LABEL_CONDITIONED_EXPLAIN = "label-conditioned-explain"
    UNIFIED_INSTRUCTION = "unified-instruction"


class PromptError(ValueError):
    pass


class MissingGoldLabel(PromptError):
    pass


class UnexpectedGoldLabel(PromptError):
    pass


# Fixed wording is kept verbatim, including "should be begin" and "if to".
TEMPLATES: dict[PromptKind, str] = {
    PromptKind.ZERO_SHOT_CLASSIFY: (
        'Your task is to classify the stance of the comment on the topic as "favor", '
        '"against", or "neutral". Conclude with the label.\n'
        "Topic: {Topic}\n"
        "Comment: {Comment}\n"
        "Stance:"
    ),
    PromptKind.LABEL_CONDITIONED_EXPLAIN: (
        "Explain the stance of the comment towards the topic by analyzing its content "
        "and relation to the topic.\n"
        "Topic: {Topic}\n"
        "Comment: {Comment}\n\n"
        'Your answer should be begin with: "The comment is classified as {Stance} '
        'towards {Topic} because"'
    ),
    PromptKind.UNIFIED_INSTRUCTION: (
        'Your task if to classify the stance of the comment on the topic as "favor", '
        '"against", or "neutral".\n'
        "Topic: {Topic}\n"
        "Comment: {Comment}\n"
        "Stance:\n"
        "Explain:"
    ),
}

STEM_TEMPLATE = "The comment is classified as {stance} towards {topic} because"

_PLACEHOLDER = re.compile(r"\{(Topic|Comment|Stance)\}")


def rationale_stem(gold: StanceLabel, topic: str) -> str:
    return STEM_TEMPLATE.format(stance=gold.word, topic=topic)


def render_prompt(kind: PromptKind, topic: str, comment: str, gold: StanceLabel | None = None) -> str:
    if kind is PromptKind.LABEL_CONDITIONED_EXPLAIN:
        if gold is None:
            raise MissingGoldLabel("the label-conditioned prompt needs the gold stance")
    elif gold is not None:
        raise UnexpectedGoldLabel(f"{kind.value} prompts must not see the gold stance")
    values = {"Topic": topic, "Comment": comment, "Stance": gold.word if gold else ""}
    # Single-pass substitution: braces inside the comment are never re-expanded.
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], TEMPLATES[kind])
