"""Whole-file detection: sum the commands of each file, pad benign data with size-matched pseudo-files."""

import numpy as np

from shellgate.corpus import Label
from shellgate.featurize import build_vocabulary, vectorize
from shellgate.filelevel import FileSample, aggregate, detect_files, fit_count_distribution, synthesize_benign_files
from shellgate.pipeline import PipelineConfig
from shellgate.synthetic import surrogate_corpus

rng = np.random.default_rng(0)

# Malware files hold a skewed number of commands each.
mal_cmds = surrogate_corpus(1500, 0, seed=3)
sizes = np.minimum(rng.geometric(0.3, size=400), 25)
mal_files, start = [], 0
for i, n in enumerate(sizes):
    chunk = mal_cmds[start:start + n]
    start += n
    if not chunk:
        break
    mal_files.append(FileSample(f"mal-{i}", chunk, Label.MALICIOUS))
print(f"{len(mal_files)} malware files, {start} commands")

# A file vector is the sum of its command vectors; no n-gram crosses two commands.
vocab = build_vocabulary(mal_cmds[:200], "char", (1, 3))
f = mal_files[0]
total = sum((vectorize(c.text, vocab).dense() for c in f.commands), np.zeros(len(vocab)))
print("aggregate equals the sum of command vectors:", np.array_equal(aggregate(f, vocab).dense(), total))

# Benign commands have no files; build pseudo-files whose sizes follow the malware distribution.
dist = fit_count_distribution(mal_files)
pool = surrogate_corpus(0, 1500, seed=4)
ben_files = synthesize_benign_files(pool, dist, len(mal_files), seed=0)
print(f"mean commands per file: malware {dist.mean:.2f}, synthesized benign "
      f"{np.mean([len(b.commands) for b in ben_files]):.2f}")

for model in ("lr", "rf"):
    rep = detect_files(PipelineConfig(model=model, k=10), mal_files + ben_files)
    m = rep.mean
    print(f"file-level {model.upper()}: AC {m.accuracy:.4f}  F1 {m.f1:.4f}  FNR {m.fnr:.4f}  FPR {m.fpr:.4f}")
