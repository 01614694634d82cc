"""
Eliciting label-conditioned rationales
======================================

Renders the explanation prompt for a few examples, asks a completion client
for a rationale and caches the answers as JSON lines. The offline mock client
is used here; pass an HTTPCompletionClient for a real service.
"""

import tempfile
from pathlib import Path

from stancedistill import synthetic
from stancedistill.elicitor import MockCompletionClient, build_rationale_store, load_rationale_store
from stancedistill.prompts import PromptKind, render_prompt

examples = synthetic.make_examples(6, seed=2)
ex = examples[0]

# The prompt carries the gold label and the sentence stem the answer must start with
print(render_prompt(PromptKind.LABEL_CONDITIONED_EXPLAIN, ex.topic, ex.comment, ex.gold))

# Build the store, then run again: the second pass only reads the cache
cache = Path(tempfile.mkdtemp()) / "rationales.jsonl"
client = MockCompletionClient()
print(build_rationale_store(examples, client, cache))
print(build_rationale_store(examples, client, cache))

for rex in list(load_rationale_store(cache).values())[:3]:
    print(f"[{rex.example.gold.word}] {rex.rationale}")
