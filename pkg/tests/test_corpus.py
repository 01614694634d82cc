import json
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stancedistill import synthetic
from stancedistill.corpus import (
    LABELS,
    REFERENCE_TOPIC_COUNTS,
    EmptyComment,
    EmptyPool,
    InvalidFraction,
    MalformedRow,
    StanceExample,
    StanceLabel,
    UnknownStanceString,
    compute_stats,
    make_split,
    parse_stance_file,
    read_split_jsonl,
    serialize_stance_file,
    subsample,
    write_split_jsonl,
)

HEADER = b"ID\tTarget\tTweet\tStance\n"


def test_parse_single_row_strips_marker():
    exs = parse_stance_file(HEADER + b"101\tAtheism\tgod is dead #SemST\tAGAINST\n")
    assert exs == [StanceExample("101", "Atheism", "god is dead", StanceLabel.AGAINST)]


def test_header_only_is_empty():
    assert parse_stance_file(HEADER) == []


def test_unknown_stance():
    with pytest.raises(UnknownStanceString) as err:
        parse_stance_file(HEADER + b"1\tAtheism\thello\tMAYBE\n")
    assert "MAYBE" in str(err.value)


def test_malformed_row_reports_line():
    with pytest.raises(MalformedRow) as err:
        parse_stance_file(HEADER + b"1\tAtheism\thi\tFAVOR\n2\tAtheism only\n")
    assert err.value.line_no == 3


def test_marker_only_comment_is_empty():
    with pytest.raises(EmptyComment):
        parse_stance_file(HEADER + b"1\tAtheism\t  #SemST \tNONE\n")


@pytest.mark.parametrize(
    "raw, label",
    [("FAVOR", StanceLabel.FAVOR), ("against", StanceLabel.AGAINST),
     ("NONE", StanceLabel.NEUTRAL), ("Neutral", StanceLabel.NEUTRAL)],
)
def test_stance_strings(raw, label):
    line = f"1\tAtheism\tx\t{raw}\n".encode()
    assert parse_stance_file(HEADER + line)[0].gold is label


def test_crlf_bom_and_extra_columns():
    raw = "﻿ID\tTarget\tTweet\tStance\tOpinion Towards\tSentiment\r\n7\tHillary Clinton\tno #SemST\tAGAINST\t1. x\tneg\r\n"
    ex = parse_stance_file(raw.encode("utf-8"))[0]
    assert (ex.id, ex.comment, ex.gold) == ("7", "no", StanceLabel.AGAINST)


def test_cp1252_fallback():
    raw = HEADER + "1\tAtheism\tcaf\xe9 #SemST\tFAVOR\n".encode("cp1252")
    assert parse_stance_file(raw)[0].comment == "café"


def _reference_shaped_corpus():
    exs = []
    for topic, counts in REFERENCE_TOPIC_COUNTS.items():
        for label, n in zip(LABELS, counts):
            exs += [StanceExample(f"{topic[:3]}-{label.value}-{i}", topic, f"text {i}", label) for i in range(n)]
    return exs


def test_stats_match_reference_shaped_corpus():
    stats = compute_stats(_reference_shaped_corpus())
    assert stats.per_topic["Atheism"] == (124, 464, 145)
    assert stats.per_topic["Climate Change is a Real Concern"] == (335, 26, 203)
    assert stats.total == sum(sum(c) for c in REFERENCE_TOPIC_COUNTS.values()) == 4970


def test_stats_empty():
    stats = compute_stats([])
    assert stats.totals == (0, 0, 0) and stats.total == 0


def test_stats_csv():
    stats = compute_stats(parse_stance_file(HEADER + b"1\tAtheism\ta\tFAVOR\n2\tAtheism\tb\tNONE\n"))
    assert stats.to_csv() == "topic,favor,against,neutral\nAtheism,1,0,1\n"


def test_split_arithmetic_single_topic():
    pool = [StanceExample(str(i), "Atheism", "t", StanceLabel.FAVOR) for i in range(100)]
    split = make_split(pool, 0.1, seed=5)
    assert (len(split.validation), len(split.train)) == (10, 90)


def test_split_deterministic_and_covers_topics():
    pool = synthetic.make_examples(203, seed=2)
    a, b = make_split(pool, seed=11), make_split(pool, seed=11)
    assert a.train == b.train and a.validation == b.validation
    assert {e.topic for e in a.validation} == {e.topic for e in pool}
    assert len({e.topic for e in pool}) == 5


def test_split_errors():
    with pytest.raises(EmptyPool):
        make_split([], seed=0)
    with pytest.raises(InvalidFraction):
        make_split(synthetic.make_examples(5), 1.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 120), seed=st.integers(0, 2**31), frac=st.floats(0.01, 0.99))
def test_split_partition_property(n, seed, frac):
    pool = synthetic.make_examples(n, seed=seed % 1000)
    split = make_split(pool, frac, seed)
    ids_t, ids_v = [e.id for e in split.train], [e.id for e in split.validation]
    assert not set(ids_t) & set(ids_v)
    assert Counter(ids_t + ids_v) == Counter(e.id for e in pool)
    per_topic = Counter(e.topic for e in pool)
    val_topic = Counter(e.topic for e in split.validation)
    for topic, size in per_topic.items():
        assert val_topic[topic] == math.ceil(frac * size)


def test_subsample_identity_and_invalid():
    pool = synthetic.make_examples(50)
    assert subsample(pool, 1.0, seed=3) == pool
    with pytest.raises(InvalidFraction):
        subsample(pool, 0.0, seed=3)
    with pytest.raises(InvalidFraction):
        subsample(pool, 1.5, seed=3)


def test_subsample_stratum_proportions():
    pool = synthetic.make_examples(3000, seed=9)
    sample = subsample(pool, 0.1, seed=4)
    # Oracle: count every (topic, label) stratum directly.
    full = Counter((e.topic, e.gold) for e in pool)
    got = Counter((e.topic, e.gold) for e in sample)
    assert set(got) == set(full)
    for key, n in full.items():
        assert got[key] == math.ceil(0.1 * n)
    assert abs(len(sample) - math.ceil(0.1 * 3000)) <= len(full)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), f1=st.floats(0.05, 1.0), f2=st.floats(0.05, 1.0))
def test_subsample_nested(seed, f1, f2):
    pool = synthetic.make_examples(400, seed=1)
    lo, hi = sorted((f1, f2))
    assert {e.id for e in subsample(pool, lo, seed)} <= {e.id for e in subsample(pool, hi, seed)}


_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp"), blacklist_characters="\t\r\n\x85\x0b\x0c\x1c\x1d\x1e"),
    min_size=1, max_size=40,
).map(str.strip).filter(lambda s: s and not s.lower().endswith("#semst"))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_text, st.sampled_from(["Atheism", "Hillary Clinton"]), st.sampled_from(LABELS)),
                max_size=8))
def test_serialize_round_trip(rows):
    exs = [StanceExample(f"id{i}", topic, text, label) for i, (text, topic, label) in enumerate(rows)]
    assert parse_stance_file(serialize_stance_file(exs)) == exs
    again = parse_stance_file(serialize_stance_file(parse_stance_file(serialize_stance_file(exs))))
    assert again == exs


def test_split_jsonl_round_trip(tmp_path):
    pool = synthetic.make_examples(40)
    split = make_split(pool, seed=1, test=synthetic.make_examples(10, seed=5, id_prefix="t"))
    path = tmp_path / "splits.jsonl"
    write_split_jsonl(split, path)
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"id", "topic", "comment", "gold", "partition"}
    back = read_split_jsonl(path, seed=1)
    assert (back.train, back.validation, back.test) == (split.train, split.validation, split.test)
