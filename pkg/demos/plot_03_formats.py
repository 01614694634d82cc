"""
Text formats for the three training paradigms
=============================================

Shows what the model reads and writes under single-task fine-tuning,
rationale-first fine-tuning and the two-task setup, and how generated text is
parsed back into a label.
"""

from stancedistill.codec import (Paradigm, TextFormat, encode_mtl, encode_st_cot, encode_st_ft,
                                 parse_generation)
from stancedistill.corpus import StanceExample, StanceLabel
from stancedistill.elicitor import RationalizedExample

ex = StanceExample("101", "Atheism", "god is dead", StanceLabel.AGAINST)
rex = RationalizedExample(ex, "The comment is classified as against towards Atheism because it mocks belief",
                          "mock", 1, "2024-01-01T00:00:00+00:00")

for name, inst in [("st-ft", encode_st_ft(ex)), ("st-cot", encode_st_cot(rex)), *zip(["mtl/a", "mtl/b"], encode_mtl(rex))]:
    print(f"{name:7} {inst.input_text!r:45} -> {inst.target_text!r}")

# The instruction-style input wraps topic and comment in a task description
print(encode_st_ft(ex, TextFormat(instructed=True)).input_text)

# Parsing: last "Stance:" marker first, then a bare label, then a single label word
for raw in ["against", "it mocks belief Stance: against", "could be favor or against"]:
    out = parse_generation(raw, Paradigm.ST_COT)
    print(f"{raw!r:36} -> {out.label}, rationale={out.rationale!r}")
