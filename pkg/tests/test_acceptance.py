"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from shellgate import cli
from shellgate.corpus import Label, extract_pcap_payloads, write_jsonl
from shellgate.eval import Confusion, compare_models, confusion, cross_validate, metrics
from shellgate.featurize import ngrams, tokenize_char, tokenize_term
from shellgate.filelevel import FileSample, detect_files, fit_count_distribution, synthesize_benign_files
from shellgate.models import TrainConfig, init_mlp, lr_loss_grad, mlp_loss_grad, train_rf
from shellgate.pipeline import PipelineConfig, SampleFeatures
from shellgate.reduce import fit_pca
from shellgate.synthetic import surrogate_corpus

from pcapbuild import GET_PAYLOAD, three_packet_capture
from test_models import fd_rel_error, two_moons


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def test_c01_gradient_oracles(report):
    t0 = time.perf_counter()
    worst_lr = worst_mlp = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X, y = rng.normal(size=(5, 3)), rng.integers(0, 2, 5).astype(float)
        w, b = rng.normal(size=3), np.array([rng.normal()])
        _, gw, gb = lr_loss_grad(w, b[0], X, y, 1e-2)
        worst_lr = max(worst_lr, fd_rel_error(lambda: lr_loss_grad(w, b[0], X, y, 1e-2)[0], [w, b], [gw, [gb]]))

        layers = init_mlp(4, rng, [8, 6, 5, 4, 3])
        layers = [(W, rng.normal(scale=0.1, size=bias.shape)) for W, bias in layers]
        Xm, ym = rng.normal(size=(3, 4)), rng.integers(0, 2, 3).astype(float)
        _, grads = mlp_loss_grad(layers, Xm, ym, 1e-2)
        params = [p for layer in layers for p in layer]
        analytic = [g for pair in grads for g in pair]
        worst_mlp = max(worst_mlp, fd_rel_error(lambda: mlp_loss_grad(layers, Xm, ym, 1e-2)[0], params, analytic))
    dt = time.perf_counter() - t0
    ok = worst_lr < 1e-4 and worst_mlp < 1e-3 and dt < 10
    report(1, ok, f"max rel err LR {worst_lr:.2e} (<1e-4), MLP {worst_mlp:.2e} (<1e-3), {dt:.2f}s (<10s)")


def test_c02_pca_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_orth = worst_recon = 0.0
    retained_ok = True
    for _ in range(30):
        X = rng.normal(size=(200, 20)) * rng.uniform(0.1, 5.0, size=20)
        target = float(rng.uniform(0.5, 0.999))
        m = fit_pca(X, target)
        worst_orth = max(worst_orth, float(np.abs(m.components @ m.components.T - np.eye(m.q)).max()))
        retained_ok &= m.retained >= target
        err = ((X - m.inverse_transform(m.transform(X))) ** 2).sum() / ((X - m.mean) ** 2).sum()
        worst_recon = max(worst_recon, abs((1 - err) - m.retained) / m.retained)
    dt = time.perf_counter() - t0
    ok = worst_orth <= 1e-8 and retained_ok and worst_recon <= 1e-6 and dt < 30
    report(2, ok, f"orthonormality {worst_orth:.1e} (<=1e-8), retained>=target {retained_ok}, "
                  f"recon complement rel gap {worst_recon:.1e} (<=1e-6), {dt:.2f}s (<30s)")


def test_c03_metric_oracle(report):
    rng = np.random.default_rng(0)
    mismatches = 0
    for i in range(1000):
        n = int(rng.integers(1, 60))
        # every fourth case draws single-class truth or predictions to hit the zero-denominator paths
        p_true = [0.0, 1.0, 0.5, float(rng.uniform())][i % 4]
        y_true = (rng.uniform(size=n) < p_true).astype(int)
        y_pred = (rng.uniform(size=n) < rng.uniform()).astype(int)
        tp = tn = fp = fn = 0
        for t, p in zip(y_true.tolist(), y_pred.tolist()):
            tp += t == 1 and p == 1
            tn += t == 0 and p == 0
            fp += t == 0 and p == 1
            fn += t == 1 and p == 0
        expected = (
            (tp + tn) / (tp + tn + fp + fn),
            2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0,
            fn / (tp + fn) if tp + fn else 0.0,
            fp / (fp + tn) if fp + tn else 0.0,
        )
        c = confusion(y_true, y_pred)
        m = metrics(c)
        mismatches += c != Confusion(tp, tn, fp, fn) or (m.accuracy, m.f1, m.fnr, m.fpr) != expected
    report(3, mismatches == 0, f"{mismatches} mismatches over 1000 random confusions (exact equality)")


def test_c04_forest_is_exact_mean(report):
    X, y = two_moons(400, seed=1)
    forest = train_rf(X, y, TrainConfig(n_trees=25, max_depth=8, seed=3))
    queries = np.random.default_rng(2).normal(scale=2.0, size=(1000, 2))
    outs = forest.tree_outputs(queries)
    bad = 0
    for j in range(len(queries)):
        total = 0.0
        for value in outs[:, j]:
            total += float(value)
        bad += forest.predict_proba(queries[j]) != total / forest.n_trees
    report(4, bad == 0, f"{bad} of 1000 inputs differ from the mean of {forest.n_trees} tree outputs (bit-exact)")


def test_c05_tokenizer_totality(report):
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(10_000):
        data = rng.integers(0, 256, size=int(rng.integers(0, 120)), dtype=np.uint8).tobytes()
        if rng.uniform() < 0.5:  # bias half the cases towards printable text so term tokens occur
            data = bytes(b % 95 + 32 for b in data)
        chars = tokenize_char(data).tokens
        terms = tokenize_term(data).tokens
        failures += len(chars) != len(data)
        failures += any(len(t) < 3 or not (t.isascii() and t.isalnum()) for t in terms)
        lo = int(rng.integers(1, 4))
        hi = lo + int(rng.integers(0, 3))
        for seq in (chars, terms):
            closed = sum(max(0, len(seq) - n + 1) for n in range(lo, hi + 1))
            failures += len(ngrams(seq, lo, hi)) != closed
    report(5, failures == 0, f"{failures} violations over 10000 random byte strings")


@pytest.fixture(scope="module")
def surrogate():
    return surrogate_corpus(2000, 2000, noise=0.2, seed=0)


@pytest.fixture(scope="module")
def char_mixed(surrogate):
    # timed from raw text: featurization, per-fold vocabulary and PCA, and all three models
    t0 = time.perf_counter()
    feats = SampleFeatures(surrogate, "char", (1, 5))
    reports = compare_models(PipelineConfig(mode="char", policy="mixed", k=10, seed=0), surrogate,
                             ("lr", "rf", "mlp"), features=feats)
    return reports, time.perf_counter() - t0, feats


@pytest.mark.slow
def test_c06_surrogate_end_to_end(report, char_mixed):
    reports, dt, _ = char_mixed
    acc = {k: r.mean.accuracy for k, r in reports.items()}
    ok = all(a >= 0.95 for a in acc.values()) and dt < 300 and all(r.k == 10 for r in reports.values())
    report(6, ok, ", ".join(f"{k.upper()} AC {a:.4f}" for k, a in acc.items()) + f" (>=0.95), {dt:.0f}s (<300s)")


@pytest.mark.slow
def test_c07_malware_only_char_more_stable_than_term(report, surrogate, char_mixed):
    reports, _, char_feats = char_mixed
    feats = {"char": char_feats, "term": SampleFeatures(surrogate, "term", (1, 5))}
    acc = {("char", "mixed"): reports["lr"].mean.accuracy}
    for mode, policy in (("char", "malware-only"), ("term", "mixed"), ("term", "malware-only")):
        cfg = PipelineConfig(mode=mode, policy=policy, model="lr", k=10, seed=0)
        acc[mode, policy] = cross_validate(cfg, surrogate, features=feats[mode]).mean.accuracy
    drop_char = acc["char", "mixed"] - acc["char", "malware-only"]
    drop_term = acc["term", "mixed"] - acc["term", "malware-only"]
    detail = (f"LR accuracy drop mixed->malware-only: char {100 * drop_char:.2f} pts, term {100 * drop_term:.2f} pts "
              f"(char {acc['char', 'mixed']:.4f}->{acc['char', 'malware-only']:.4f}, "
              f"term {acc['term', 'mixed']:.4f}->{acc['term', 'malware-only']:.4f})")
    report(7, drop_char < drop_term, detail)


def test_c08_file_level(report):
    commands = surrogate_corpus(300, 300, seed=8)
    files = [FileSample(f"f{i}", (c,), c.label) for i, c in enumerate(commands)]
    cfg = PipelineConfig(mode="char", ngram_range=(1, 3), k=10, seed=4)
    a = cross_validate(cfg, commands)
    b = detect_files(cfg, files)
    same = a.per_fold == b.per_fold and a.confusions == b.confusions and a.mean == b.mean

    # malware files of skewed sizes, regrouped from surrogate commands
    rng = np.random.default_rng(8)
    mal = surrogate_corpus(4000, 0, seed=9)
    pool = surrogate_corpus(0, 3000, seed=10)
    sizes = np.minimum(rng.geometric(0.25, size=900), 40)
    cursor, mal_files = 0, []
    for i, size in enumerate(sizes):
        chunk = mal[cursor:cursor + size]
        cursor += size
        if not chunk:
            break
        mal_files.append(FileSample(f"m{i}", tuple(chunk), Label.MALICIOUS))
    dist = fit_count_distribution(mal_files)
    synth = synthesize_benign_files(pool, dist, 1000, seed=0)
    src = np.sort(dist.counts)
    got = np.sort([len(f.commands) for f in synth])
    grid = np.union1d(src, got)
    ks = float(np.max(np.abs(np.searchsorted(src, grid, "right") / len(src)
                             - np.searchsorted(got, grid, "right") / len(got))))
    report(8, same and ks < 0.05, f"file vs command fold metrics identical: {same}; KS {ks:.4f} (<0.05, n_files=1000)")


def test_c09_pcap_golden(report):
    results = []
    for little in (True, False):
        out = extract_pcap_payloads(three_packet_capture(little))
        results.append(len(out) == 1 and out[0].text == GET_PAYLOAD)
    report(9, all(results), f"one Command equal to the GET payload byte-for-byte (LE {results[0]}, BE {results[1]})")


@pytest.mark.slow
def test_c10_evaluate_is_deterministic(report, tmp_path, capsys):
    corpus = surrogate_corpus(500, 500, seed=12)
    for name, label in (("mal.jsonl", Label.MALICIOUS), ("ben.jsonl", Label.BENIGN)):
        with open(tmp_path / name, "w") as fh:
            write_jsonl([c for c in corpus if c.label is label], fh)
    blobs, codes = [], []
    for i in range(2):
        out = tmp_path / f"report{i}.json"
        codes.append(cli.main(["evaluate", "--malicious", str(tmp_path / "mal.jsonl"), "--benign",
                               str(tmp_path / "ben.jsonl"), "--models", "lr,rf,mlp", "--seed", "7", "-o", str(out)]))
        blobs.append(out.read_bytes())
    capsys.readouterr()
    doc = json.loads(blobs[0])
    ok = codes == [0, 0] and blobs[0] == blobs[1] and len(doc["reports"]) == 3
    report(10, ok, f"exit codes {codes}, reports byte-identical: {blobs[0] == blobs[1]} ({len(blobs[0])} bytes)")
