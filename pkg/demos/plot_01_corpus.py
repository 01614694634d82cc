"""
Reading a stance corpus and splitting it
========================================

Parses official-layout tab-separated files, prints per-topic label counts,
and carves out a stratified validation split plus nested training subsets.
Set SEMEVAL_DIR to point at the real files; otherwise a synthetic stand-in
with the same layout is used.
"""

import os
from pathlib import Path

from stancedistill import synthetic
from stancedistill.corpus import (compute_stats, find_official_files, make_split, parse_stance_file,
                                  read_stance_file, subsample)

# Load the training and test files, or build toy ones in the same format
data_dir = os.environ.get("SEMEVAL_DIR")
if data_dir:
    train_file, test_file = find_official_files(Path(data_dir))
    pool, test = read_stance_file(train_file), read_stance_file(test_file) if test_file else []
else:
    train_raw, test_raw = synthetic.make_official_style_files(400, 120, seed=0)
    print(train_raw.decode().splitlines()[1])
    pool, test = parse_stance_file(train_raw), parse_stance_file(test_raw)

# Label counts per topic, as CSV
print(compute_stats(pool + test).to_csv())

# 10% of every topic goes to validation; the test set is attached untouched
split = make_split(pool, val_fraction=0.1, seed=0, test=test)
print({name: len(part) for name, part in split.partitions()})

# Subsamples are stratified by (topic, label) and nested for a fixed seed
small, large = subsample(split.train, 0.2, seed=1), subsample(split.train, 0.5, seed=1)
print(len(small), len(large), {e.id for e in small} <= {e.id for e in large})
