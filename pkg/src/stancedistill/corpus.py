"""SemEval-2016 Task 6 ingestion, stratified splits and size-sweep subsampling."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import re
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class StanceLabel(str, enum.Enum):
    """The three stance classes; the value doubles as the verbalizer word."""

    FAVOR = "favor"
    AGAINST = "against"
    NEUTRAL = "neutral"

    @property
    def word(self) -> str:
        return self.value


LABELS: tuple[StanceLabel, ...] = (StanceLabel.FAVOR, StanceLabel.AGAINST, StanceLabel.NEUTRAL)

_STANCE_STRINGS = {
    "favor": StanceLabel.FAVOR,
    "against": StanceLabel.AGAINST,
    "none": StanceLabel.NEUTRAL,
    "neutral": StanceLabel.NEUTRAL,
}

# Official target strings; published count tables abbreviate the climate one.
TOPICS = (
    "Atheism",
    "Climate Change is a Real Concern",
    "Feminist Movement",
    "Hillary Clinton",
    "Legalization of Abortion",
    "Donald Trump",
)
EVALUATION_TOPICS = TOPICS[:5]

# (favor, against, neutral) per topic over the official train+test files.
REFERENCE_TOPIC_COUNTS: dict[str, tuple[int, int, int]] = {
    "Donald Trump": (148, 299, 260),
    "Hillary Clinton": (163, 565, 356),
    "Feminist Movement": (268, 511, 170),
    "Legalization of Abortion": (167, 544, 222),
    "Atheism": (124, 464, 145),
    "Climate Change is a Real Concern": (335, 26, 203),
}

HEADER = ("ID", "Target", "Tweet", "Stance")
_CORPUS_MARKER = re.compile(r"\s*#SemST\s*$", re.IGNORECASE)


class CorpusError(ValueError):
    pass


class MalformedRow(CorpusError):
    def __init__(self, line_no: int, n_fields: int):
        super().__init__(f"line {line_no}: expected at least 4 tab-separated fields, got {n_fields}")
        self.line_no = line_no


class UnknownStanceString(CorpusError):
    def __init__(self, value: str, line_no: int | None = None):
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}unknown stance string {value!r}")
        self.value = value
        self.line_no = line_no


class EmptyComment(CorpusError):
    def __init__(self, line_no: int | None = None):
        super().__init__(f"line {line_no}: comment is empty" if line_no else "comment is empty")
        self.line_no = line_no


class EmptyPool(CorpusError):
    pass


class InvalidFraction(CorpusError):
    pass


@dataclass(frozen=True)
class StanceExample:
    id: str
    topic: str
    comment: str
    gold: StanceLabel

    def __post_init__(self):
        if not self.comment.strip():
            raise EmptyComment()

    def to_dict(self) -> dict:
        return {"id": self.id, "topic": self.topic, "comment": self.comment, "gold": self.gold.value}

    @classmethod
    def from_dict(cls, d: dict) -> "StanceExample":
        return cls(str(d["id"]), d["topic"], d["comment"], parse_stance_string(d["gold"]))


@dataclass
class CorpusSplit:
    train: list[StanceExample]
    validation: list[StanceExample]
    test: list[StanceExample]
    seed: int

    def partitions(self) -> Iterable[tuple[str, list[StanceExample]]]:
        yield "train", self.train
        yield "validation", self.validation
        yield "test", self.test

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name, exs in self.partitions():
            h.update(name.encode())
            h.update(corpus_fingerprint(exs).encode())
        return h.hexdigest()[:16]


@dataclass
class CorpusStats:
    per_topic: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    @property
    def totals(self) -> tuple[int, int, int]:
        cols = zip(*self.per_topic.values()) if self.per_topic else ((), (), ())
        return tuple(sum(c) for c in cols)  # type: ignore[return-value]

    @property
    def total(self) -> int:
        return sum(self.totals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["topic", "favor", "against", "neutral"])
        for topic in sorted(self.per_topic):
            w.writerow([topic, *self.per_topic[topic]])
        return buf.getvalue()


def parse_stance_string(value: str, line_no: int | None = None) -> StanceLabel:
    try:
        return _STANCE_STRINGS[value.strip().lower()]
    except KeyError:
        raise UnknownStanceString(value, line_no) from None


def parse_stance_file(raw: bytes | str) -> list[StanceExample]:
    """Parse a SemEval-2016 Task 6 tab-separated file.

    The first line is a header. Extra columns beyond ``ID, Target, Tweet,
    Stance`` (the test files carry opinion/sentiment columns) are ignored.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError:
            # Some redistributed copies of the official files are cp1252.
            text = raw.decode("cp1252", errors="replace")
    else:
        text = raw
    lines = text.splitlines()
    examples = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 4:
            raise MalformedRow(line_no, len(fields))
        ex_id, topic, tweet, stance = (f.strip() for f in fields[:4])
        comment = _CORPUS_MARKER.sub("", tweet).strip()
        if not comment:
            raise EmptyComment(line_no)
        examples.append(StanceExample(ex_id, topic, comment, parse_stance_string(stance, line_no)))
    return examples


def read_stance_file(path: str | Path) -> list[StanceExample]:
    return parse_stance_file(Path(path).read_bytes())


def serialize_stance_file(examples: Sequence[StanceExample]) -> bytes:
    rows = ["\t".join(HEADER)]
    for ex in examples:
        if any(c in ex.comment for c in "\t\r\n"):
            raise CorpusError(f"example {ex.id}: comment contains a tab or line break")
        rows.append("\t".join((ex.id, ex.topic, ex.comment, _official_stance(ex.gold))))
    return ("\n".join(rows) + "\n").encode("utf-8")


def _official_stance(label: StanceLabel) -> str:
    return "NONE" if label is StanceLabel.NEUTRAL else label.value.upper()


def compute_stats(examples: Iterable[StanceExample]) -> CorpusStats:
    counts: dict[str, Counter] = defaultdict(Counter)
    for ex in examples:
        counts[ex.topic][ex.gold] += 1
    return CorpusStats({t: tuple(c[lab] for lab in LABELS) for t, c in counts.items()})


def corpus_fingerprint(examples: Iterable[StanceExample]) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(json.dumps(ex.to_dict(), sort_keys=True, ensure_ascii=False).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def _stratum_rng(seed: int, key: str) -> np.random.Generator:
    # crc32 keeps the per-stratum stream stable across processes (unlike hash()).
    return np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(key.encode("utf-8"))])


def _group(items: Iterable[int], key) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = defaultdict(list)
    for item in items:
        groups[key(item)].append(item)
    return groups


def make_split(
    train_pool: Sequence[StanceExample],
    val_fraction: float = 0.1,
    seed: int = 0,
    test: Sequence[StanceExample] = (),
) -> CorpusSplit:
    """Hold out ``ceil(val_fraction * n_topic)`` examples of every topic for validation."""
    if not train_pool:
        raise EmptyPool("training pool is empty")
    if not 0 < val_fraction < 1:
        raise InvalidFraction(f"val_fraction must lie in (0, 1), got {val_fraction}")
    held_out: set[int] = set()
    for topic, members in _group(range(len(train_pool)), lambda i: train_pool[i].topic).items():
        order = _stratum_rng(seed, topic).permutation(len(members))
        k = _ceil_share(val_fraction, len(members))
        held_out.update(members[j] for j in order[:k])
    train = [ex for i, ex in enumerate(train_pool) if i not in held_out]
    validation = [ex for i, ex in enumerate(train_pool) if i in held_out]
    return CorpusSplit(train, validation, list(test), seed)


def _ceil_share(fraction: float, n: int) -> int:
    # Rounding first keeps 0.1 * 30 from becoming 4.
    return math.ceil(round(fraction * n, 9))


def subsample(train: Sequence[StanceExample], fraction: float, seed: int) -> list[StanceExample]:
    """Stratified by (topic, label); nested across fractions for a fixed seed.

    Each stratum gets one seeded permutation and contributes its first
    ``ceil(fraction * size)`` members, so smaller fractions are prefixes of
    larger ones. Input order is preserved in the result.
    """
    if not 0 < fraction <= 1:
        raise InvalidFraction(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1:
        return list(train)
    keep: set[int] = set()
    strata = _group(range(len(train)), lambda i: f"{train[i].topic}\x1f{train[i].gold.value}")
    for key, members in strata.items():
        order = _stratum_rng(seed, key).permutation(len(members))
        k = _ceil_share(fraction, len(members))
        keep.update(members[j] for j in order[:k])
    return [ex for i, ex in enumerate(train) if i in keep]


def write_split_jsonl(split: CorpusSplit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, exs in split.partitions():
            for ex in exs:
                fh.write(json.dumps({**ex.to_dict(), "partition": name}, ensure_ascii=False) + "\n")


def read_split_jsonl(path: str | Path, seed: int = 0) -> CorpusSplit:
    parts: dict[str, list[StanceExample]] = {"train": [], "validation": [], "test": []}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                parts[d["partition"]].append(StanceExample.from_dict(d))
    return CorpusSplit(parts["train"], parts["validation"], parts["test"], seed)


def find_official_files(data_dir: str | Path) -> tuple[Path, Path | None]:
    """Locate the train and (optional) test files inside a SemEval data directory."""
    data_dir = Path(data_dir)
    files = sorted(p for p in data_dir.iterdir() if p.is_file())
    train = [p for p in files if "train" in p.name.lower()]
    test = [p for p in files if "test" in p.name.lower()]
    if not train:
        raise FileNotFoundError(f"no training file (name containing 'train') in {data_dir}")
    return train[0], (test[0] if test else None)
