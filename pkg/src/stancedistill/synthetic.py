"""Small synthetic SemEval-style corpora for demos, smoke runs and tests.

The text is templated so that stance is learnable from surface cues; it is
not a substitute for the official data.
"""

from __future__ import annotations

import numpy as np

from .corpus import EVALUATION_TOPICS, StanceExample, StanceLabel, serialize_stance_file

_SUBJECT = {
    "Atheism": ["god", "faith", "church", "prayer"],
    "Climate Change is a Real Concern": ["climate", "warming", "carbon", "emissions"],
    "Feminist Movement": ["feminism", "equality", "women", "feminists"],
    "Hillary Clinton": ["hillary", "clinton", "hrc", "hillary2016"],
    "Legalization of Abortion": ["abortion", "prolife", "prochoice", "roe"],
}
_TEMPLATES = {
    StanceLabel.FAVOR: ["love {s} so much", "{s} is great", "proud to back {s}", "yes to {s} today"],
    StanceLabel.AGAINST: ["{s} is a lie", "sick of {s}", "{s} ruins all", "no more {s} ever"],
    StanceLabel.NEUTRAL: ["who saw {s} news", "reading on {s}", "{s} talk at noon", "a poll on {s}"],
}
_FILLER = ["lol", "wow", "today", "again", "now", "ok", "so", "hmm"]


def make_examples(n: int, seed: int = 0, topics=EVALUATION_TOPICS, id_prefix: str = "s") -> list[StanceExample]:
    rng = np.random.default_rng(seed)
    labels = list(StanceLabel)
    out = []
    for i in range(n):
        topic = topics[i % len(topics)]
        label = labels[int(rng.integers(3))]
        subject = _SUBJECT.get(topic, [topic.lower()])[int(rng.integers(4))]
        text = _TEMPLATES[label][int(rng.integers(4))].format(s=subject)
        if rng.random() < 0.5:
            text = f"{text} {_FILLER[int(rng.integers(len(_FILLER)))]}"
        out.append(StanceExample(f"{id_prefix}{i:05d}", topic, text, label))
    return out


def make_official_style_files(n_train: int, n_test: int, seed: int = 0) -> tuple[bytes, bytes]:
    """Tab-separated train/test payloads in the official layout, with the #SemST marker."""
    train = make_examples(n_train, seed, id_prefix="tr")
    test = make_examples(n_test, seed + 1, id_prefix="te")

    def with_marker(exs):
        return serialize_stance_file([StanceExample(e.id, e.topic, e.comment + " #SemST", e.gold) for e in exs])

    return with_marker(train), with_marker(test)
