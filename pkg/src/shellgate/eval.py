"""Stratified k-fold cross-validation with accuracy, F1, FNR and FPR.

Malicious (label 1) is the positive class throughout.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import models
from .pipeline import PipelineConfig, SampleFeatures
from .reduce import fit_pca, transform

METRIC_NAMES = ("accuracy", "f1", "fnr", "fpr")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    fnr: float
    fpr: float
    degenerate: tuple[str, ...] = ()

    def to_json(self) -> dict:
        d = {name: getattr(self, name) for name in METRIC_NAMES}
        d["degenerate"] = list(self.degenerate)
        return d


def confusion(y_true, y_pred) -> Confusion:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {len(y_true)} labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise ValueError("confusion needs at least one sample")
    t = y_true == 1
    p = y_pred == 1
    return Confusion(int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)), int(np.sum(t & ~p)))


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(c: Confusion) -> Metrics:
    """Zero denominators give 0.0 and list the metric in ``degenerate``."""
    flags: list[str] = []
    ac = _ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn, "accuracy", flags)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1", flags)
    fnr = _ratio(c.fn, c.tp + c.fn, "fnr", flags)
    fpr = _ratio(c.fp, c.fp + c.tn, "fpr", flags)
    return Metrics(ac, f1, fnr, fpr, tuple(flags))


def mean_metrics(per_fold: Sequence[Metrics]) -> Metrics:
    k = len(per_fold)
    vals = {name: sum(getattr(m, name) for m in per_fold) / k for name in METRIC_NAMES}
    # fold means are clipped against summation drift outside [min, max]
    for name in METRIC_NAMES:
        col = [getattr(m, name) for m in per_fold]
        vals[name] = min(max(vals[name], min(col)), max(col))
    flagged = sorted({f for m in per_fold for f in m.degenerate})
    return Metrics(degenerate=tuple(flagged), **vals)


@dataclass
class FoldReport:
    per_fold: list[Metrics]
    mean: Metrics
    k: int
    seed: int
    meta: dict = field(default_factory=dict)
    confusions: list[Confusion] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"k": self.k, "seed": self.seed}
        out.update(self.meta)
        out["per_fold"] = []
        for i, m in enumerate(self.per_fold):
            row = m.to_json()
            if i < len(self.confusions):
                c = self.confusions[i]
                row.update(tp=c.tp, tn=c.tn, fp=c.fp, fn=c.fn)
            out["per_fold"].append(row)
        out["mean"] = self.mean.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False)


def format_table(reports: dict[str, FoldReport], title: str = "") -> str:
    """Percentages per model in the Acc. / F-1 / FNR / FPR column layout."""
    lines = []
    if title:
        lines.append(title)
    header = f"{'ML':<6}|{'Acc.':>8} |{'F-1':>8} |{'FNR':>8} |{'FPR':>8} |"
    lines.append(header)
    lines.append("-" * len(header))
    for name, rep in reports.items():
        m = rep.mean
        lines.append(f"{name.upper():<6}|" + "".join(f"{100 * getattr(m, n):8.2f} |" for n in METRIC_NAMES))
    return "\n".join(lines)


def kfold_split(labels, k: int = 10, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified folds. Each class is shuffled with ``seed`` and dealt round-robin."""
    if k < 2:
        raise SplitError("k must be >= 2")
    y = np.asarray([getattr(s, "y", s) for s in labels]).ravel()
    n = len(y)
    fold_of = np.empty(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if len(members) < k:
            raise SplitError(f"class {cls} has {len(members)} samples, fewer than k={k}")
        members = rng.permutation(members)
        fold_of[members] = np.arange(len(members)) % k
    idx = np.arange(n)
    return [(idx[fold_of != f], idx[fold_of == f]) for f in range(k)]


def _n_workers(n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get("SHELLGATE_THREADS")
    return max(1, int(env)) if env else 1


def _run_fold(feats: SampleFeatures, fold, config: PipelineConfig, kinds):
    train_idx, test_idx = fold
    if np.intersect1d(train_idx, test_idx).size:
        raise AssertionError("train and test folds overlap")
    vocab = feats.vocabulary(train_idx, config.policy)
    X_train = feats.matrix(train_idx, vocab)
    pca = fit_pca(X_train, config.variance_target, standardize=config.standardize,
                  max_fit_samples=config.max_fit_samples, seed=config.seed)
    Z_train = transform(pca, X_train)
    Z_test = transform(pca, feats.matrix(test_idx, vocab))
    out = {}
    for kind in kinds:
        model = models.train(kind, Z_train, feats.y[train_idx], config.train)
        p = np.atleast_1d(model.predict_proba(Z_test))
        c = confusion(feats.y[test_idx], (p >= models.THRESHOLD).astype(int))
        out[kind] = (metrics(c), c)
    return out


def _map(fn, items, n_jobs):
    workers = _n_workers(n_jobs)
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def compare_models(config: PipelineConfig, samples: Sequence, kinds=("lr", "rf", "mlp"), k: int | None = None,
                   seed: int | None = None, n_jobs=None, features: SampleFeatures | None = None,
                   level: str = "command") -> dict[str, FoldReport]:
    """Cross-validate several classifiers on identical folds, vocabularies and PCA fits.

    Vocabulary, PCA and models are refit on every training fold; no test-fold
    text reaches any fitting step. ``features`` lets callers reuse precomputed
    n-gram counts across configs sharing mode and n-gram range.
    """
    k = config.k if k is None else k
    seed = config.seed if seed is None else seed
    feats = features or SampleFeatures(samples, config.mode, config.ngram_range, config.with_stats)
    folds = kfold_split(feats.y, k, seed)
    results = _map(lambda f: _run_fold(feats, f, config, kinds), folds, n_jobs)
    reports = {}
    for kind in kinds:
        per_fold = [r[kind][0] for r in results]
        meta = {"level": level, "mode": config.mode.value, "policy": config.policy.value, "model": kind}
        reports[kind] = FoldReport(per_fold, mean_metrics(per_fold), k, seed, meta, [r[kind][1] for r in results])
    return reports


def cross_validate(config: PipelineConfig, samples: Sequence, k: int | None = None, seed: int | None = None,
                   n_jobs=None, features: SampleFeatures | None = None, level: str = "command") -> FoldReport:
    """K-fold evaluation of ``config.model``; see compare_models."""
    return compare_models(config, samples, (config.model,), k, seed, n_jobs, features, level)[config.model]
