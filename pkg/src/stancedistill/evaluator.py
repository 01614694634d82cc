"""Stance metrics: per-class P/R/F1, F_avg over favor and against, per-topic
breakdowns and mean/std aggregation over seeded runs."""

from __future__ import annotations

import csv
import io
import json
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .codec import ParseOutcome
from .corpus import LABELS, StanceLabel

SCORED = (StanceLabel.FAVOR, StanceLabel.AGAINST)
# Column index for generations that could not be parsed.
FAILED_COL = len(LABELS)


class EvaluationError(ValueError):
    pass


class LengthMismatch(EvaluationError):
    pass


class EmptyInput(EvaluationError):
    pass


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    per_class: dict[str, ClassScores]
    f_avg: float
    parse_failure_rate: float
    n: int
    per_topic: dict[str, float | None] = field(default_factory=dict)
    confusion: list[list[int]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def f1(self, label: StanceLabel) -> float:
        return self.per_class[label.value].f1

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["per_class"] = {k: ClassScores(**v) for k, v in d["per_class"].items()}
        return cls(**d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1"])
        for name, s in self.per_class.items():
            w.writerow([name, s.precision, s.recall, s.f1])
        w.writerow(["f_avg", "", "", self.f_avg])
        w.writerow(["parse_failure_rate", "", "", self.parse_failure_rate])
        w.writerow(["n", "", "", self.n])
        return buf.getvalue()


def _check(golds, outcomes, topics):
    if not (len(golds) == len(outcomes) == len(topics)):
        raise LengthMismatch(f"lengths differ: {len(golds)} golds, {len(outcomes)} outcomes, {len(topics)} topics")
    if not golds:
        raise EmptyInput("nothing to score")


def confusion_matrix(golds: Sequence[StanceLabel], outcomes: Sequence[ParseOutcome]) -> np.ndarray:
    """3 x 4 counts: rows are gold labels, columns predicted labels plus a failure column."""
    index = {lab: i for i, lab in enumerate(LABELS)}
    m = np.zeros((len(LABELS), len(LABELS) + 1), dtype=np.int64)
    for g, o in zip(golds, outcomes):
        m[index[g], FAILED_COL if o.label is None else index[o.label]] += 1
    return m


def _class_scores(m: np.ndarray) -> dict[str, ClassScores]:
    out = {}
    for i, lab in enumerate(LABELS):
        tp = int(m[i, i])
        predicted = int(m[:, i].sum())
        support = int(m[i, :].sum())
        p = tp / predicted if predicted else 0.0
        r = tp / support if support else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        out[lab.value] = ClassScores(p, r, f)
    return out


def _f_avg(per_class: dict[str, ClassScores]) -> float:
    return (per_class["favor"].f1 + per_class["against"].f1) / 2


def _has_scored_support(m: np.ndarray) -> bool:
    idx = [LABELS.index(lab) for lab in SCORED]
    return bool(m[idx, :].sum() or m[:, idx].sum())


def per_topic(
    golds: Sequence[StanceLabel], outcomes: Sequence[ParseOutcome], topics: Sequence[str]
) -> dict[str, float | None]:
    """F_avg inside each topic; None where no favor/against gold or prediction occurs."""
    _check(golds, outcomes, topics)
    groups: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(topics):
        groups[t].append(i)
    result: dict[str, float | None] = {}
    for t in sorted(groups):
        idx = groups[t]
        m = confusion_matrix([golds[i] for i in idx], [outcomes[i] for i in idx])
        result[t] = _f_avg(_class_scores(m)) if _has_scored_support(m) else None
    return result


def score(
    golds: Sequence[StanceLabel], outcomes: Sequence[ParseOutcome], topics: Sequence[str]
) -> EvalReport:
    """Pooled metrics over all examples.

    A failed parse matches no class: it is a false negative for its gold
    class and a false positive for none.
    """
    _check(golds, outcomes, topics)
    m = confusion_matrix(golds, outcomes)
    per_class = _class_scores(m)
    n = len(golds)
    return EvalReport(
        per_class=per_class,
        f_avg=_f_avg(per_class),
        parse_failure_rate=int(m[:, FAILED_COL].sum()) / n,
        n=n,
        per_topic=per_topic(golds, outcomes, topics),
        confusion=m.tolist(),
    )


@dataclass
class RunAggregate:
    mean: dict[str, float]
    std: dict[str, float]
    n_runs: int
    seeds: list[int] = field(default_factory=list)

    @property
    def single_run(self) -> bool:
        return self.n_runs == 1

    def to_dict(self) -> dict:
        return {**asdict(self), "single_run": self.single_run}

    @classmethod
    def from_dict(cls, d: dict) -> "RunAggregate":
        return cls(d["mean"], d["std"], d["n_runs"], list(d.get("seeds", [])))


def _metric_vector(r: EvalReport) -> dict[str, float]:
    v = {"f_avg": r.f_avg, "parse_failure_rate": r.parse_failure_rate}
    for name, s in r.per_class.items():
        v[f"f1_{name}"] = s.f1
    return v


def aggregate(reports: Sequence[EvalReport], seeds: Sequence[int] = ()) -> RunAggregate:
    """Mean and sample standard deviation (n-1 denominator; 0 for a single run)."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    vectors = [_metric_vector(r) for r in reports]
    mean, std = {}, {}
    for key in vectors[0]:
        vals = [v[key] for v in vectors]
        # statistics works in exact arithmetic: identical runs give exactly 0.
        mean[key] = statistics.mean(vals)
        std[key] = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return RunAggregate(mean, std, len(reports), list(seeds))
