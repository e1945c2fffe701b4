"""File-level detection: per-file feature sums and size-matched benign pseudo-files."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import featurize as fz
from .corpus import Command, CorpusError, Label, SourceKind
from .eval import FoldReport, cross_validate
from .featurize import FeatureVector, Vocabulary
from .pipeline import PipelineConfig


@dataclass(frozen=True)
class FileSample:
    file_id: str
    commands: tuple[Command, ...]
    label: Label

    def __post_init__(self):
        object.__setattr__(self, "commands", tuple(self.commands))
        object.__setattr__(self, "label", Label.parse(self.label))
        if not self.commands:
            raise ValueError(f"file {self.file_id}: no commands")
        if any(c.label is not self.label for c in self.commands):
            raise ValueError(f"file {self.file_id}: command labels differ from file label")

    @property
    def y(self) -> int:
        return self.label.y

    def to_json(self) -> dict:
        return {
            "file_id": self.file_id,
            "label": self.label.value,
            "commands": [c.text.decode("utf-8", errors="replace") for c in self.commands],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FileSample":
        try:
            label = Label.parse(obj["label"])
            cmds = tuple(Command(t.encode("utf-8"), label, obj["file_id"], SourceKind.TEXT_LIST) for t in obj["commands"])
            return cls(obj["file_id"], cmds, label)
        except (KeyError, TypeError, AttributeError) as exc:
            raise CorpusError(f"bad file record: {exc}") from exc


def group_by_source(commands: Iterable[Command]) -> list[FileSample]:
    """One FileSample per (source_id, label), in first-seen order."""
    groups: dict[tuple[str, Label], list[Command]] = {}
    for c in commands:
        groups.setdefault((c.source_id, c.label), []).append(c)
    return [FileSample(sid, tuple(cs), lab) for (sid, lab), cs in groups.items()]


def aggregate(file: FileSample, vocab: Vocabulary) -> FeatureVector:
    """Element-wise sum of the file's command vectors."""
    total = Counter()
    for c in file.commands:
        total.update(fz.ngram_counts(c.text, vocab.mode, vocab.ngram_range))
    return fz.counts_to_vector(total, vocab)


@dataclass(frozen=True)
class CountDistribution:
    counts: tuple[int, ...]

    def __post_init__(self):
        if not self.counts:
            raise ValueError("count distribution is empty")
        if min(self.counts) < 1:
            raise ValueError("command counts must be >= 1")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.counts)[rng.integers(0, len(self.counts), size=n)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts))


def fit_count_distribution(malware_files: Sequence[FileSample]) -> CountDistribution:
    if not malware_files:
        raise ValueError("need at least one malware file")
    return CountDistribution(tuple(len(f.commands) for f in malware_files))


def synthesize_benign_files(pool: Sequence[Command], dist: CountDistribution, n_files: int, seed: int = 0,
                            prefix: str = "synth") -> list[FileSample]:
    """Benign pseudo-files whose sizes follow ``dist``.

    Commands are drawn without replacement until the pool runs dry, then with
    replacement from the whole pool.
    """
    if not pool:
        raise ValueError("benign pool is empty")
    if any(Label.parse(c.label) is not Label.BENIGN for c in pool):
        raise ValueError("benign pool contains non-benign commands")
    rng = np.random.default_rng(seed)
    sizes = dist.sample(n_files, rng)
    order = rng.permutation(len(pool))
    cursor = 0
    files = []
    width = len(str(max(n_files - 1, 0)))
    for i, size in enumerate(sizes):
        picks = []
        for _ in range(int(size)):
            if cursor < len(order):
                picks.append(pool[order[cursor]])
                cursor += 1
            else:
                picks.append(pool[int(rng.integers(len(pool)))])
        files.append(FileSample(f"{prefix}-{i:0{width}d}", tuple(picks), Label.BENIGN))
    return files


def detect_files(config: PipelineConfig, files: Sequence[FileSample], k: int | None = None,
                 seed: int | None = None, n_jobs=None) -> FoldReport:
    """Cross-validation where each sample is a file represented by its summed command features."""
    return cross_validate(config, files, k, seed, n_jobs, level="file")


def write_files_jsonl(files: Iterable[FileSample], stream) -> int:
    n = 0
    for f in files:
        stream.write(json.dumps(f.to_json(), ensure_ascii=False) + "\n")
        n += 1
    return n


def read_files_jsonl(stream) -> list[FileSample]:
    out = []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            out.append(FileSample.from_json(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"file corpus line {lineno}: {exc}") from exc
    return out
