import json
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stancedistill.codec import ParseOutcome
from stancedistill.corpus import LABELS, StanceLabel
from stancedistill.evaluator import (
    EmptyInput,
    EvalReport,
    LengthMismatch,
    aggregate,
    per_topic,
    score,
)

F, A, N = StanceLabel.FAVOR, StanceLabel.AGAINST, StanceLabel.NEUTRAL


def outs(labels):
    return [ParseOutcome(lab, lab.word if lab else "??") for lab in labels]


def run(golds, preds, topics=None):
    return score(golds, outs(preds), topics or ["t"] * len(golds))


def brute_f_avg(golds, preds):
    """Independent oracle: count pairs directly, no confusion matrix."""
    f1s = []
    for c in (F, A):
        tp = sum(g == c and p == c for g, p in zip(golds, preds))
        fp = sum(g != c and p == c for g, p in zip(golds, preds))
        fn = sum(g == c and p != c for g, p in zip(golds, preds))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / 2


def test_hand_counted_case():
    r = run([F, A, N, F], [F, A, F, A])
    assert r.f1(F) == pytest.approx(0.5, abs=1e-12)
    assert r.f1(A) == pytest.approx(2 / 3, abs=1e-12)
    assert abs(r.f_avg - 7 / 12) <= 1e-12


def test_perfect_and_all_neutral():
    assert run([F, A, N], [F, A, N]).f_avg == 1.0
    assert run([F, A, N], [N, N, N]).f_avg == 0.0


def test_failures_count_against_gold_only():
    r = run([F, A], [F, None])
    assert r.parse_failure_rate == 0.5
    assert r.per_class["favor"].precision == 1.0
    assert r.per_class["against"].recall == 0.0
    assert r.confusion[1][3] == 1


def test_errors():
    with pytest.raises(LengthMismatch):
        score([F], [], ["t"])
    with pytest.raises(EmptyInput):
        score([], [], [])
    with pytest.raises(EmptyInput):
        aggregate([])


def test_per_topic_single_and_undefined():
    golds, preds = [F, A, N, F], [F, A, F, A]
    r = run(golds, preds)
    assert per_topic(golds, outs(preds), ["t"] * 4) == {"t": r.f_avg}
    pt = per_topic([F, N], outs([F, N]), ["a", "b"])
    assert pt == {"a": 0.5, "b": None}  # against F1 is 0 inside "a"


def test_aggregate_examples():
    same = [run([F, A], [F, A])] * 3
    agg = aggregate(same, seeds=[1, 2, 3])
    assert agg.mean["f_avg"] == 1.0 and agg.std["f_avg"] == 0.0 and agg.n_runs == 3
    reports = [EvalReport(r.per_class, v, 0.0, 4) for r, v in zip(same, (0.6, 0.7, 0.8))]
    agg = aggregate(reports)
    assert agg.mean["f_avg"] == pytest.approx(0.7) and agg.std["f_avg"] == pytest.approx(0.1)
    assert aggregate(reports[:1]).single_run


def test_serialization():
    r = run([F, A, N, F], [F, A, F, None], ["x", "x", "y", "y"])
    assert EvalReport.from_dict(json.loads(r.to_json())) == r
    rows = r.to_csv().splitlines()
    assert rows[0] == "class,precision,recall,f1"
    assert [row.split(",")[0] for row in rows[-3:]] == ["f_avg", "parse_failure_rate", "n"]


labels = st.sampled_from(LABELS)
pairs = st.lists(st.tuples(labels, st.one_of(st.none(), labels)), min_size=1, max_size=40)


@settings(max_examples=200)
@given(pairs)
def test_matches_brute_force(data):
    golds, preds = zip(*data)
    assert abs(run(list(golds), list(preds)).f_avg - brute_f_avg(golds, preds)) < 1e-12


@settings(max_examples=100)
@given(pairs, st.randoms(use_true_random=False))
def test_permutation_invariant(data, rnd):
    shuffled = list(data)
    rnd.shuffle(shuffled)
    a = run(*map(list, zip(*data)))
    b = run(*map(list, zip(*shuffled)))
    assert abs(a.f_avg - b.f_avg) < 1e-12


@settings(max_examples=100)
@given(pairs, st.integers(0, 10))
def test_neutral_agreements_do_not_move_f_avg(data, extra):
    golds, preds = map(list, zip(*data))
    base = run(golds, preds).f_avg
    assert abs(run(golds + [N] * extra, preds + [N] * extra).f_avg - base) < 1e-12


@settings(max_examples=100)
@given(pairs)
def test_failures_never_help(data):
    golds, preds = map(list, zip(*data))
    failed = [None] * len(golds)
    assert run(golds, failed).f_avg == 0.0
    assert run(golds, failed).parse_failure_rate == 1.0


@settings(max_examples=50)
@given(pairs)
def test_aggregate_matches_statistics(data):
    golds, preds = map(list, zip(*data))
    reports = [run(golds, preds), run(golds, golds), run(golds, [N] * len(golds))]
    agg = aggregate(reports)
    vals = [r.f_avg for r in reports]
    assert agg.mean["f_avg"] == pytest.approx(statistics.mean(vals))
    assert agg.std["f_avg"] == pytest.approx(statistics.stdev(vals))
