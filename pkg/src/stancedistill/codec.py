"""Text-to-text encodings for the three training paradigms and the parser
that turns generated text back into a stance label."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Sequence

from .corpus import LABELS, StanceExample, StanceLabel
from .prompts import PromptKind, render_prompt

if TYPE_CHECKING:
    from .elicitor import RationalizedExample


class Paradigm(str, enum.Enum):
    ST_FT = "st-ft"
    ST_COT = "st-cot"
    MTL = "mtl"


class TaskTag(str, enum.Enum):
    STANCE = "stance"
    RATIONALE = "rationale"


class StemNotFound(ValueError):
    pass


@dataclass(frozen=True)
class TextFormat:
    """Literal strings the encoders splice into inputs and targets."""

    separator: str = "</s>"
    stance_prefix: str = "Stance:"
    explain_prefix: str = "Explain:"
    answer_marker: str = "Stance:"
    instructed: bool = False


DEFAULT_FORMAT = TextFormat()


@dataclass(frozen=True)
class TrainingInstance:
    input_text: str
    target_text: str
    task: TaskTag
    paradigm: Paradigm
    source_id: str
    truncated: bool = False

    def to_json(self) -> str:
        d = asdict(self)
        d["task"], d["paradigm"] = self.task.value, self.paradigm.value
        return json.dumps(d, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "TrainingInstance":
        d = json.loads(line)
        return cls(
            d["input_text"], d["target_text"], TaskTag(d["task"]), Paradigm(d["paradigm"]),
            d["source_id"], d.get("truncated", False),
        )


@dataclass(frozen=True)
class ParseOutcome:
    label: StanceLabel | None
    raw: str
    rationale: str | None = None

    @property
    def failed(self) -> bool:
        return self.label is None


# Token-length control: (count_tokens, max_tokens). None disables truncation.
TokenBudget = tuple[Callable[[str], int], int]


def base_input(topic: str, comment: str, fmt: TextFormat = DEFAULT_FORMAT) -> str:
    if fmt.instructed:
        return render_prompt(PromptKind.UNIFIED_INSTRUCTION, topic, comment)
    return f"{topic}{fmt.separator}{comment}"


def fit_input(
    example: StanceExample,
    build: Callable[[str], str],
    budget: TokenBudget | None,
) -> tuple[str, bool]:
    """Build an input, cutting the comment's tail until it fits the budget.

    The topic is never shortened; if even an empty comment overflows, the
    input is returned with an empty comment and flagged.
    """
    text = build(example.comment)
    if budget is None:
        return text, False
    count, limit = budget
    if count(text) <= limit:
        return text, False
    lo, hi = 0, len(example.comment)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if count(build(example.comment[:mid])) <= limit:
            lo = mid
        else:
            hi = mid - 1
    return build(example.comment[:lo]), True


def _encode_input(example, fmt, budget, prefix=""):
    pre = f"{prefix} " if prefix else ""
    return fit_input(example, lambda c: pre + base_input(example.topic, c, fmt), budget)


def encode_st_ft(
    example: StanceExample, fmt: TextFormat = DEFAULT_FORMAT, budget: TokenBudget | None = None
) -> TrainingInstance:
    text, cut = _encode_input(example, fmt, budget)
    return TrainingInstance(text, example.gold.word, TaskTag.STANCE, Paradigm.ST_FT, example.id, cut)


_LABEL_ALT = "|".join(lab.word for lab in LABELS)


def _stem_pattern(topic: str) -> re.Pattern:
    topic_pat = r"\s+".join(re.escape(w) for w in topic.split())
    return re.compile(
        rf"^\s*the\s+comment\s+is\s+classified\s+as\s+({_LABEL_ALT})\s+towards\s+"
        rf"{topic_pat}\s+because\b[\s,:]*",
        re.IGNORECASE,
    )


def match_stem(rationale: str, topic: str) -> tuple[StanceLabel, str] | None:
    """Return (stem label, body after the stem) or None when the stem is absent."""
    m = _stem_pattern(topic).match(rationale)
    if m is None:
        return None
    return StanceLabel(m.group(1).lower()), rationale[m.end():].strip()


def rationale_body(rex: "RationalizedExample") -> str:
    found = match_stem(rex.rationale, rex.example.topic)
    if found is None or not found[1]:
        raise StemNotFound(f"example {rex.example.id}: rationale does not start with the expected stem")
    return found[1]


def encode_st_cot(
    rex: "RationalizedExample", fmt: TextFormat = DEFAULT_FORMAT, budget: TokenBudget | None = None
) -> TrainingInstance:
    ex = rex.example
    target = f"{rationale_body(rex)} {fmt.answer_marker} {ex.gold.word}"
    text, cut = _encode_input(ex, fmt, budget)
    return TrainingInstance(text, target, TaskTag.STANCE, Paradigm.ST_COT, ex.id, cut)


def encode_mtl(
    rex: "RationalizedExample", fmt: TextFormat = DEFAULT_FORMAT, budget: TokenBudget | None = None
) -> tuple[TrainingInstance, TrainingInstance]:
    ex = rex.example
    rationale_body(rex)  # same stem precondition as ST-CoT
    s_text, s_cut = _encode_input(ex, fmt, budget, fmt.stance_prefix)
    r_text, r_cut = _encode_input(ex, fmt, budget, fmt.explain_prefix)
    return (
        TrainingInstance(s_text, ex.gold.word, TaskTag.STANCE, Paradigm.MTL, ex.id, s_cut),
        TrainingInstance(r_text, rex.rationale.strip(), TaskTag.RATIONALE, Paradigm.MTL, ex.id, r_cut),
    )


def prediction_input(
    example: StanceExample, paradigm: Paradigm, fmt: TextFormat = DEFAULT_FORMAT,
    budget: TokenBudget | None = None,
) -> str:
    prefix = fmt.stance_prefix if paradigm is Paradigm.MTL else ""
    return _encode_input(example, fmt, budget, prefix)[0]


_WORD = re.compile(r"[a-z]+")
_TRAILING = " \t\r\n.,;:!?\"'()[]"


def parse_generation(
    raw: str, paradigm: Paradigm = Paradigm.ST_FT, fmt: TextFormat = DEFAULT_FORMAT
) -> ParseOutcome:
    """Recover a stance label from generated text; never raises.

    Rules, in order: the label following the last answer marker; the whole
    output being a label word; exactly one distinct label word anywhere.
    """
    text = raw if isinstance(raw, str) else str(raw)
    lower = text.lower()
    marker = fmt.answer_marker.lower()
    pos = lower.rfind(marker)
    if pos >= 0:
        m = re.match(rf"\s*({_LABEL_ALT})\b", lower[pos + len(marker):])
        if m:
            rationale = text[:pos].strip() if paradigm is Paradigm.ST_COT else None
            return ParseOutcome(StanceLabel(m.group(1)), text, rationale)
    bare = lower.strip().rstrip(_TRAILING).lstrip(_TRAILING)
    if bare in {lab.word for lab in LABELS}:
        return ParseOutcome(StanceLabel(bare), text)
    found = {w for w in _WORD.findall(lower) if w in {lab.word for lab in LABELS}}
    if len(found) == 1:
        return ParseOutcome(StanceLabel(found.pop()), text)
    return ParseOutcome(None, text)


def write_instances_jsonl(instances: Iterable[TrainingInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")


def read_instances_jsonl(path) -> list[TrainingInstance]:
    with open(path, encoding="utf-8") as fh:
        return [TrainingInstance.from_json(line) for line in fh if line.strip()]


def encode_examples(
    examples: Sequence[StanceExample],
    paradigm: Paradigm,
    rationales: dict[str, "RationalizedExample"] | None = None,
    fmt: TextFormat = DEFAULT_FORMAT,
    budget: TokenBudget | None = None,
) -> tuple[list[TrainingInstance], int]:
    """Encode a corpus for one paradigm; returns (instances, n_excluded).

    Examples without a usable rationale are excluded from the
    rationale-dependent paradigms.
    """
    out: list[TrainingInstance] = []
    excluded = 0
    for ex in examples:
        if paradigm is Paradigm.ST_FT:
            out.append(encode_st_ft(ex, fmt, budget))
            continue
        rex = (rationales or {}).get(ex.id)
        if rex is None:
            excluded += 1
            continue
        try:
            if paradigm is Paradigm.ST_COT:
                out.append(encode_st_cot(rex, fmt, budget))
            else:
                out.extend(encode_mtl(rex, fmt, budget))
        except StemNotFound:
            excluded += 1
    return out, excluded
