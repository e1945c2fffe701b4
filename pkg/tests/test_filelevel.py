import io
import random
from collections import Counter

import numpy as np
import pytest

from shellgate.corpus import Command, Label, SourceKind
from shellgate.eval import cross_validate
from shellgate.featurize import Mode, build_vocabulary, ngrams, tokenize, vectorize
from shellgate.filelevel import (CountDistribution, FileSample, aggregate, detect_files, fit_count_distribution,
                                 group_by_source, read_files_jsonl, synthesize_benign_files, write_files_jsonl)
from shellgate.models import TrainConfig
from shellgate.pipeline import PipelineConfig
from shellgate.synthetic import surrogate_corpus

FAST = PipelineConfig(ngram_range=(1, 2), variance_target=0.99, k=3, train=TrainConfig(epochs=5, n_trees=5))


def cmd(text, label=Label.BENIGN, source="t"):
    return Command(text.encode(), Label.parse(label), source, SourceKind.TEXT_LIST)


def fsample(texts, label=Label.MALICIOUS, fid="f"):
    return FileSample(fid, tuple(cmd(t, label, fid) for t in texts), label)


def ks_statistic(a, b):
    """Largest gap between the two empirical CDFs."""
    a, b = np.sort(a), np.sort(b)
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


VOCAB = build_vocabulary([cmd("wget http://1.2.3.4/a; chmod 777 a", Label.MALICIOUS), cmd("ls -la /tmp")],
                         Mode.CHAR, (1, 3))


# ---- FileSample ------------------------------------------------------------------------

def test_file_invariants():
    with pytest.raises(ValueError):
        FileSample("x", (), Label.BENIGN)
    with pytest.raises(ValueError):
        FileSample("x", (cmd("ls", Label.MALICIOUS),), Label.BENIGN)


def test_group_by_source():
    cmds = [cmd("a1", "malicious", "f1"), cmd("b1", "benign", "f2"), cmd("a2", "malicious", "f1")]
    files = group_by_source(cmds)
    assert [(f.file_id, len(f.commands)) for f in files] == [("f1", 2), ("f2", 1)]


def test_jsonl_round_trip():
    files = [fsample(["wget x", "chmod 777 x"]), fsample(["ls"], Label.BENIGN, "g")]
    buf = io.StringIO()
    write_files_jsonl(files, buf)
    back = read_files_jsonl(io.StringIO(buf.getvalue()))
    assert [(f.file_id, f.label, [c.text for c in f.commands]) for f in back] == \
           [(f.file_id, f.label, [c.text for c in f.commands]) for f in files]


# ---- aggregate ----------------------------------------------------------------------------

def test_single_command_file_equals_vector():
    f = fsample(["wget http://x"])
    assert aggregate(f, VOCAB).as_dict() == vectorize(b"wget http://x", VOCAB).as_dict()


def test_repeated_command_doubles():
    one = vectorize(b"chmod 777 a", VOCAB).as_dict()
    assert aggregate(fsample(["chmod 777 a"] * 2), VOCAB).as_dict() == {k: 2 * v for k, v in one.items()}


def test_random_files_match_brute_force():
    rng = random.Random(0)
    alphabet = "wgetchmod 7/.:ls-a"
    for _ in range(20):
        texts = ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 15))) for _ in range(5)]
        expected = Counter()
        for t in texts:
            for g in ngrams(tokenize(t.encode(), Mode.CHAR).tokens, 1, 3):
                if g in VOCAB:
                    expected[VOCAB.index[g]] += 1
        f = fsample(texts)
        assert aggregate(f, VOCAB).as_dict() == dict(expected)
        shuffled = list(texts)
        rng.shuffle(shuffled)
        assert aggregate(fsample(shuffled), VOCAB).as_dict() == dict(expected)


def test_unigram_mass_is_in_vocab_bytes():
    vocab = build_vocabulary([cmd("wget http", Label.MALICIOUS)], Mode.CHAR, (1, 1))
    texts = ["wget zz", "http 99", "qq"]
    in_vocab = sum(1 for t in texts for ch in t if ch in vocab)
    assert aggregate(fsample(texts), vocab).total() == in_vocab


# ---- count distribution and synthesis -----------------------------------------------------

def test_fit_count_distribution():
    files = [fsample(["a"] * n, fid=str(n) + str(i)) for i, n in enumerate((3, 5, 5))]
    dist = fit_count_distribution(files)
    assert sorted(dist.counts) == [3, 5, 5]
    assert sum(dist.counts) == sum(len(f.commands) for f in files)
    with pytest.raises(ValueError):
        CountDistribution(())
    with pytest.raises(ValueError):
        CountDistribution((0, 2))


def test_sampling_mean_within_five_percent():
    dist = CountDistribution((1, 1, 2, 3, 7, 20, 4))
    draws = dist.sample(10_000, np.random.default_rng(0))
    assert abs(draws.mean() - dist.mean) <= 0.05 * dist.mean


POOL = [cmd(f"ls /srv/{i}") for i in range(10)]


def test_synthesis_sufficient_pool():
    files = synthesize_benign_files(POOL, CountDistribution((2,)), 3, seed=1)
    assert [len(f.commands) for f in files] == [2, 2, 2]
    used = [c.text for f in files for c in f.commands]
    assert len(set(used)) == 6


def test_synthesis_exhaustion_fallback():
    files = synthesize_benign_files(POOL, CountDistribution((5,)), 3, seed=1)
    used = [c.text for f in files for c in f.commands]
    assert len(used) == 15
    assert set(used[:10]) == {c.text for c in POOL}  # pool emptied before any repeat
    assert all(f.label is Label.BENIGN for f in files)


def test_synthesis_deterministic_and_rejects_malicious():
    dist = CountDistribution((1, 2, 3))
    a = synthesize_benign_files(POOL, dist, 5, seed=4)
    b = synthesize_benign_files(POOL, dist, 5, seed=4)
    assert a == b
    with pytest.raises(ValueError):
        synthesize_benign_files([cmd("wget x", Label.MALICIOUS)], dist, 1)
    with pytest.raises(ValueError):
        synthesize_benign_files([], dist, 1)


def test_synthesis_ks():
    rng = np.random.default_rng(9)
    source = tuple(int(v) for v in rng.geometric(0.2, size=400))
    pool = [cmd(f"git log -{i}") for i in range(3000)]
    files = synthesize_benign_files(pool, CountDistribution(source), 1000, seed=0)
    assert ks_statistic([len(f.commands) for f in files], source) < 0.05


# ---- detection ----------------------------------------------------------------------------------

def test_separable_files():
    mal = [fsample(["wget http://x/a", f"echo {i}"], fid=f"m{i}") for i in range(9)]
    ben = [fsample(["ls -la", f"echo {i}"], Label.BENIGN, f"b{i}") for i in range(9)]
    rep = detect_files(FAST, mal + ben)
    assert rep.mean.accuracy == 1.0
    assert rep.meta["level"] == "file"


def test_single_command_files_match_command_level():
    commands = surrogate_corpus(45, 45, seed=5)
    files = [FileSample(f"f{i}", (c,), c.label) for i, c in enumerate(commands)]
    a = cross_validate(FAST, commands, seed=3)
    b = detect_files(FAST, files, seed=3)
    assert a.per_fold == b.per_fold and a.confusions == b.confusions
    assert set(a.to_json()) == set(b.to_json())
