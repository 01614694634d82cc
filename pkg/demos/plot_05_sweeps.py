"""
Alpha sweep and report from the command line
============================================

Drives the ``stancedistill`` commands in-process on a synthetic corpus: elicit
rationales with the mock client, sweep alpha over a short grid with one seed,
then print the markdown table and the plot CSV. Real runs use the default
nine-value grid and three seeds.
"""

import tempfile
from pathlib import Path

from stancedistill import synthetic
from stancedistill.cli import main

work = Path(tempfile.mkdtemp())
data = work / "data"
data.mkdir()
train_raw, test_raw = synthetic.make_official_style_files(120, 60, seed=5)
(data / "toy-trainingdata.txt").write_bytes(train_raw)
(data / "toy-testdata.txt").write_bytes(test_raw)

cache = work / "rationales.jsonl"
main(["elicit", "--data", str(data), "--cache", str(cache), "--mock-llm", "--out", str(work / "out")])

run = work / "sweep"
main(["sweep-alpha", "--data", str(data), "--cache", str(cache), "--paradigm", "mtl",
      "--alpha-grid", "0.2,0.5,0.8", "--seeds", "13", "--epochs", "3", "--batch-size", "16",
      "--lr", "5e-3", "--max-gen-len", "16", "--run-dir", str(run)])

print((run / "report.md").read_text())
print((run / "plot.csv").read_text())
