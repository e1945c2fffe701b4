"""Vocabulary -> counts -> PCA -> classifier, as one fitted object.

A sample is either a single Command or anything with a ``commands`` list
(a file). A file's features are the sum of its commands' features, so
n-grams never cross command boundaries.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import featurize as fz
from . import models
from .corpus import Label
from .featurize import CorpusPolicy, Mode, Vocabulary
from .reduce import DEFAULT_VARIANCE, PcaModel, fit_pca, transform

MODEL_KINDS = ("lr", "rf", "mlp")


@dataclass(frozen=True)
class PipelineConfig:
    mode: Mode = Mode.CHAR
    policy: CorpusPolicy = CorpusPolicy.MIXED
    ngram_range: tuple[int, int] = fz.DEFAULT_NGRAM_RANGE
    variance_target: float = DEFAULT_VARIANCE
    model: str = "lr"
    k: int = 10
    seed: int = 0
    standardize: bool = False
    with_stats: bool = True
    max_fit_samples: int | None = None
    train: models.TrainConfig = field(default_factory=models.TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "policy", CorpusPolicy.parse(self.policy))
        lo, hi = (int(v) for v in self.ngram_range)
        object.__setattr__(self, "ngram_range", (lo, hi))
        if not 1 <= lo <= hi:
            raise ValueError(f"ngram_range: need 1 <= lo <= hi, got ({lo}, {hi})")
        if not 0 < self.variance_target <= 1:
            raise ValueError("variance_target: must lie in (0, 1]")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model: expected one of {MODEL_KINDS}, got {self.model!r}")
        if self.k < 2:
            raise ValueError("k: must be >= 2")
        if self.max_fit_samples is not None and self.max_fit_samples < 2:
            raise ValueError("max_fit_samples: must be >= 2")

    def to_json(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        d["mode"] = self.mode.value
        d["policy"] = self.policy.value
        d["ngram_range"] = list(self.ngram_range)
        d["train"] = asdict(self.train)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        obj = dict(obj)
        train = models.TrainConfig(**obj.pop("train", {}))
        return cls(train=train, **obj)


def sample_texts(sample) -> list[bytes]:
    cmds = getattr(sample, "commands", None)
    if cmds is None:
        return [sample.text]
    return [c.text if hasattr(c, "text") else fz._as_bytes(c) for c in cmds]


def sample_label(sample) -> int:
    return Label.parse(sample.label).y


class SampleFeatures:
    """Per-sample n-gram counters and statistics, computed once and reused across folds."""

    def __init__(self, samples: Sequence, mode, ngram_range, with_stats=True):
        self.mode = Mode.parse(mode)
        self.ngram_range = tuple(ngram_range)
        self.with_stats = with_stats
        self.y = np.array([sample_label(s) for s in samples], dtype=int)
        self.counters: list[Counter] = []
        stats = []
        cache: dict[bytes, Counter] = {}
        for s in samples:
            texts = sample_texts(s)
            total = Counter()
            for t in texts:
                c = cache.get(t)
                if c is None:
                    c = cache[t] = fz.ngram_counts(t, self.mode, self.ngram_range)
                total.update(c)
            self.counters.append(total)
            stats.append(sum((fz.command_stats(t) for t in texts), np.zeros(fz.N_STATS)))
        self.stats = np.array(stats).reshape(len(samples), fz.N_STATS)

    def __len__(self):
        return len(self.counters)

    def vocabulary(self, rows, policy) -> Vocabulary:
        policy = CorpusPolicy.parse(policy)
        rows = np.asarray(rows)
        if policy is CorpusPolicy.MALWARE_ONLY:
            rows = rows[self.y[rows] == 1]
            if len(rows) == 0:
                raise fz.FeaturizeError("malware-only policy needs at least one malicious sample")
        if len(rows) == 0:
            raise fz.FeaturizeError("empty training corpus")
        return fz.vocabulary_from_counts((self.counters[i] for i in rows), self.mode, self.ngram_range, policy)

    def matrix(self, rows, vocab: Vocabulary):
        rows = np.asarray(rows)
        stats = self.stats[rows] if self.with_stats else None
        return fz.counts_matrix([self.counters[i] for i in rows], vocab, stats)


@dataclass
class Pipeline:
    config: PipelineConfig
    vocab: Vocabulary
    pca: PcaModel
    model: object

    @classmethod
    def fit(cls, samples: Sequence, config: PipelineConfig = PipelineConfig()) -> "Pipeline":
        feats = SampleFeatures(samples, config.mode, config.ngram_range, config.with_stats)
        return cls.fit_rows(feats, np.arange(len(feats)), config)

    @classmethod
    def fit_rows(cls, feats: SampleFeatures, rows, config: PipelineConfig) -> "Pipeline":
        vocab = feats.vocabulary(rows, config.policy)
        X = feats.matrix(rows, vocab)
        pca = fit_pca(X, config.variance_target, standardize=config.standardize,
                      max_fit_samples=config.max_fit_samples, seed=config.seed)
        Z = transform(pca, X)
        model = models.train(config.model, Z, feats.y[rows], config.train)
        return cls(config, vocab, pca, model)

    def reduce_rows(self, feats: SampleFeatures, rows) -> np.ndarray:
        return transform(self.pca, feats.matrix(rows, self.vocab))

    def features(self, samples: Sequence) -> np.ndarray:
        feats = SampleFeatures(samples, self.vocab.mode, self.vocab.ngram_range, self.config.with_stats)
        return self.reduce_rows(feats, np.arange(len(feats)))

    def predict_proba(self, samples: Sequence) -> np.ndarray:
        if not len(samples):
            return np.zeros(0)
        return np.atleast_1d(self.model.predict_proba(self.features(samples)))

    def predict_texts(self, texts: Sequence) -> np.ndarray:
        """Probabilities for raw command strings or bytes."""
        if not len(texts):
            return np.zeros(0)
        X = fz.feature_matrix([fz._as_bytes(t) for t in texts], self.vocab, self.config.with_stats)
        return np.atleast_1d(self.model.predict_proba(transform(self.pca, X)))
