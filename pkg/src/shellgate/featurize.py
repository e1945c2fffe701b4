"""Term- and character-level n-gram bag-of-words features."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Command, Label

SEP = "\x1f"
DEFAULT_NGRAM_RANGE = (1, 5)
MIN_TERM_LEN = 3
STATS_SCALE = 1.0 / 1000.0
N_STATS = 2

_TERM_SPLIT = re.compile(rb"[^A-Za-z0-9]+")


class Mode(enum.Enum):
    TERM = "term"
    CHAR = "char"

    @classmethod
    def parse(cls, value):
        if isinstance(value, Mode):
            return value
        v = str(value).lower().replace("-level", "").replace("_level", "")
        return cls(v)


class CorpusPolicy(enum.Enum):
    MIXED = "mixed"
    MALWARE_ONLY = "malware-only"

    @classmethod
    def parse(cls, value):
        if isinstance(value, CorpusPolicy):
            return value
        return cls(str(value).lower().replace("_", "-"))


class FeaturizeError(ValueError):
    pass


@dataclass(frozen=True)
class TokenSequence:
    tokens: list[str]
    mode: Mode

    def __len__(self):
        return len(self.tokens)


def _as_bytes(text) -> bytes:
    if isinstance(text, Command):
        return text.text
    if isinstance(text, str):
        return text.encode("utf-8")
    return bytes(text)


def tokenize_term(text) -> TokenSequence:
    """Split on every non-alphanumeric byte and keep words of length >= 3. Case is preserved."""
    parts = _TERM_SPLIT.split(_as_bytes(text))
    return TokenSequence([p.decode("ascii") for p in parts if len(p) >= MIN_TERM_LEN], Mode.TERM)


def tokenize_char(text) -> TokenSequence:
    # latin-1 maps each byte to exactly one code point
    return TokenSequence(list(_as_bytes(text).decode("latin-1")), Mode.CHAR)


def tokenize(text, mode) -> TokenSequence:
    return tokenize_char(text) if Mode.parse(mode) is Mode.CHAR else tokenize_term(text)


def ngrams(seq: TokenSequence | Sequence[str], lo: int, hi: int) -> list[str]:
    if not 1 <= lo <= hi:
        raise ValueError(f"bad n-gram range ({lo}, {hi})")
    toks = seq.tokens if isinstance(seq, TokenSequence) else list(seq)
    out = []
    for n in range(lo, hi + 1):
        if n == 1:
            out.extend(toks)
            continue
        out.extend(SEP.join(toks[i:i + n]) for i in range(len(toks) - n + 1))
    return out


def ngram_counts(text, mode, ngram_range=DEFAULT_NGRAM_RANGE) -> Counter:
    lo, hi = ngram_range
    return Counter(ngrams(tokenize(text, mode), lo, hi))


@dataclass
class FeatureVector:
    indices: np.ndarray
    counts: np.ndarray
    dim: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.indices) != len(self.counts):
            raise ValueError("indices and counts differ in length")
        if len(self.indices) and (np.any(np.diff(self.indices) <= 0) or self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("indices must be strictly increasing and within [0, dim)")
        if np.any(self.counts < 1):
            raise ValueError("counts must be positive")

    def total(self) -> int:
        return int(self.counts.sum())

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.counts
        return out

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.indices.tolist(), self.counts.tolist()))

    def __add__(self, other: "FeatureVector") -> "FeatureVector":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        acc = Counter(self.as_dict())
        acc.update(other.as_dict())
        keys = sorted(acc)
        return FeatureVector(keys, [acc[k] for k in keys], self.dim)

    def to_json(self, source_id: str | None = None) -> dict:
        return {"source_id": source_id, "indices": self.indices.tolist(), "counts": self.counts.tolist(), "dim": self.dim}


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    ngram_range: tuple[int, int]
    mode: Mode
    policy: CorpusPolicy
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        toks = tuple(self.tokens)
        if list(toks) != sorted(set(toks)):
            raise FeaturizeError("vocabulary tokens must be unique and sorted")
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "ngram_range", tuple(int(v) for v in self.ngram_range))
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "policy", CorpusPolicy.parse(self.policy))
        object.__setattr__(self, "index", {t: i for i, t in enumerate(toks)})

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "ngram_range": list(self.ngram_range),
            "policy": self.policy.value,
            "tokens": list(self.tokens),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(tuple(obj["tokens"]), tuple(obj["ngram_range"]), Mode.parse(obj["mode"]), CorpusPolicy.parse(obj["policy"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=True)

    @classmethod
    def loads(cls, s: str) -> "Vocabulary":
        return cls.from_json(json.loads(s))


def vocabulary_from_counts(counters: Iterable[Counter], mode, ngram_range, policy) -> Vocabulary:
    keys: set[str] = set()
    for c in counters:
        keys.update(c)
    if not keys:
        raise FeaturizeError("effective corpus produced an empty vocabulary")
    return Vocabulary(tuple(sorted(keys)), tuple(ngram_range), Mode.parse(mode), CorpusPolicy.parse(policy))


def _policy_filter(labels, policy) -> list[bool]:
    policy = CorpusPolicy.parse(policy)
    if policy is CorpusPolicy.MIXED:
        return [True] * len(labels)
    return [Label.parse(lab) is Label.MALICIOUS if not isinstance(lab, (int, np.integer)) else lab == 1 for lab in labels]


def build_vocabulary(corpus: Sequence[Command], mode=Mode.CHAR, ngram_range=DEFAULT_NGRAM_RANGE,
                     policy=CorpusPolicy.MIXED) -> Vocabulary:
    if not corpus:
        raise FeaturizeError("cannot build a vocabulary from an empty corpus")
    keep = _policy_filter([c.label for c in corpus], policy)
    if not any(keep):
        raise FeaturizeError("malware-only policy needs at least one malicious command")
    counters = (ngram_counts(c.text, mode, ngram_range) for c, k in zip(corpus, keep) if k)
    return vocabulary_from_counts(counters, mode, ngram_range, policy)


def counts_to_vector(counts: Counter, vocab: Vocabulary) -> FeatureVector:
    idx = vocab.index
    pairs = sorted((idx[g], n) for g, n in counts.items() if g in idx)
    return FeatureVector([p[0] for p in pairs], [p[1] for p in pairs], len(vocab))


def vectorize(text, vocab: Vocabulary) -> FeatureVector:
    """Frequency of every vocabulary n-gram in ``text``; out-of-vocabulary n-grams are dropped."""
    return counts_to_vector(ngram_counts(text, vocab.mode, vocab.ngram_range), vocab)


def command_stats(text) -> np.ndarray:
    """Byte length and distinct-byte count, scaled by 1/1000."""
    b = _as_bytes(text)
    return np.array([len(b), len(set(b))], dtype=float) * STATS_SCALE


def counts_matrix(counters: Sequence[Counter], vocab: Vocabulary, stats: np.ndarray | None = None) -> sp.csr_matrix:
    """Rows of n-gram counts over ``vocab``; ``stats`` (n x 2) is appended as trailing dense columns."""
    idx = vocab.index
    indptr = [0]
    cols: list[int] = []
    vals: list[float] = []
    for c in counters:
        row = sorted((idx[g], n) for g, n in c.items() if g in idx)
        cols.extend(p[0] for p in row)
        vals.extend(p[1] for p in row)
        indptr.append(len(cols))
    n = len(counters)
    X = sp.csr_matrix((np.asarray(vals, dtype=float), np.asarray(cols, dtype=np.int64), np.asarray(indptr)),
                      shape=(n, len(vocab)))
    if stats is not None:
        X = sp.hstack([X, sp.csr_matrix(np.asarray(stats, dtype=float).reshape(n, N_STATS))], format="csr")
    return X


def feature_matrix(texts: Sequence, vocab: Vocabulary, with_stats: bool = True) -> sp.csr_matrix:
    counters = [ngram_counts(t, vocab.mode, vocab.ngram_range) for t in texts]
    stats = np.array([command_stats(t) for t in texts]).reshape(len(texts), N_STATS) if with_stats else None
    return counts_matrix(counters, vocab, stats)
