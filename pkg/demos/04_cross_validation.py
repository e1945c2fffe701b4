"""Ten-fold cross-validation, and what happens when only malware builds the vocabulary."""

import time

from shellgate.eval import compare_models, format_table
from shellgate.pipeline import PipelineConfig, SampleFeatures
from shellgate.synthetic import surrogate_corpus

corpus = surrogate_corpus(1000, 1000, seed=0)
print(f"{len(corpus)} commands, e.g.")
for c in corpus[:2] + corpus[-2:]:
    print(f"  {c.label.value:9s} {c.text.decode()}")

# Each fold refits vocabulary, PCA and model on its training part only.
# n-gram counts are computed once per mode and shared by every configuration.
for mode in ("char", "term"):
    feats = SampleFeatures(corpus, mode, (1, 5))
    for policy in ("mixed", "malware-only"):
        t0 = time.perf_counter()
        cfg = PipelineConfig(mode=mode, policy=policy, k=10, seed=0)
        reports = compare_models(cfg, corpus, ("lr", "rf"), features=feats)
        print()
        print(format_table(reports, f"{mode}-level, {policy} vocabulary ({time.perf_counter() - t0:.0f}s)"))

# Benign commands that embed a malicious fragment ("sudo apt update; chmod 777 mips") only
# differ from malware by their benign words. A malware-only word vocabulary throws those
# words away; character n-grams of the same words mostly survive.
