"""Command-line front end: extract, train, evaluate, predict, synth-benign.

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace

from . import corpus as cp
from . import modelfile
from .eval import SplitError, compare_models, format_table
from .featurize import FeaturizeError
from .filelevel import (FileSample, detect_files, fit_count_distribution, group_by_source,
                        synthesize_benign_files, write_files_jsonl)
from .models import TrainConfig, TrainError
from .pipeline import MODEL_KINDS, Pipeline, PipelineConfig
from .reduce import PcaFitError

log = logging.getLogger("shellgate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---- config ---------------------------------------------------------------------

_PIPELINE_KEYS = {f.name for f in fields(PipelineConfig)} - {"train"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_BOOL_KEYS = {"standardize", "with_stats", "standardize_inputs"}
_INT_KEYS = {"k", "seed", "max_fit_samples", "epochs", "batch_size", "n_trees", "max_depth"}


def _coerce(key, value):
    if value is None:
        return None
    if key == "ngram_range":
        if isinstance(value, (tuple, list)):
            return tuple(int(v) for v in value)
        lo, hi = str(value).replace("-", ",").split(",")
        return int(lo), int(hi)
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(value)
    if key in ("variance_target", "learning_rate", "l2", "feature_subsample", "momentum"):
        return float(value)
    return value


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; section headers are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line or (line.startswith("[") and line.endswith("]")):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            out[key] = value.strip("\"'")
    return out


def build_config(args) -> PipelineConfig:
    raw = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _PIPELINE_KEYS | _TRAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = v
    unknown = set(raw) - _PIPELINE_KEYS - _TRAIN_KEYS
    if unknown:
        raise UsageError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    pipe_kw, train_kw = {}, {}
    for key, value in raw.items():
        try:
            v = _coerce(key, value)
        except ValueError as exc:
            raise UsageError(f"config field {key}: {exc}") from exc
        (pipe_kw if key in _PIPELINE_KEYS else train_kw)[key] = v
    try:
        train = TrainConfig(**train_kw)
        return PipelineConfig(train=train, **pipe_kw)
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from exc


def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", help="key=value config file; flags override it")
    g.add_argument("--mode", choices=["term", "char"])
    g.add_argument("--policy", choices=["mixed", "malware-only"])
    g.add_argument("--ngram-range", dest="ngram_range", help="lo,hi (default 1,5)")
    g.add_argument("--variance-target", dest="variance_target", type=float)
    g.add_argument("--model", choices=list(MODEL_KINDS))
    g.add_argument("--k", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--standardize", action="store_const", const=True, default=None)
    g.add_argument("--no-stats", dest="with_stats", action="store_const", const=False, default=None)
    g.add_argument("--max-fit-samples", dest="max_fit_samples", type=int)
    t = p.add_argument_group("training")
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--l2", type=float)
    t.add_argument("--n-trees", dest="n_trees", type=int)
    t.add_argument("--max-depth", dest="max_depth", type=int)
    t.add_argument("--feature-subsample", dest="feature_subsample", type=float)
    t.add_argument("--momentum", type=float)


# ---- corpus loading ---------------------------------------------------------------

def _read_records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise cp.CorpusError(f"{path}:{lineno}: {exc}") from exc


def load_corpus(path, expect_label: cp.Label | None = None) -> tuple[list[cp.Command], list[FileSample] | None]:
    """Commands from a Command or FileSample JSONL file, plus the files when the input held files."""
    cmds, files = [], []
    for obj in _read_records(path):
        if "commands" in obj:
            f = FileSample.from_json(obj)
            files.append(f)
            cmds.extend(f.commands)
        else:
            cmds.append(cp.Command.from_json(obj))
    if expect_label is not None:
        wrong = sum(c.label is not expect_label for c in cmds)
        if wrong:
            raise cp.CorpusError(f"{path}: {wrong} record(s) not labeled {expect_label.value}")
    return cmds, (files or None)


def _as_files(cmds, files):
    return files if files is not None else group_by_source(cmds)


# ---- subcommands -----------------------------------------------------------------

def cmd_extract(args) -> int:
    label = cp.Label.parse(args.label)
    rules = None
    if args.kind == "binary":
        if args.rules:
            with open(args.rules, encoding="utf-8") as fh:
                rules = cp.load_rules(fh)
        else:
            rules = cp.default_rules()
    out_cmds = []
    failures = 0
    for path in args.inputs:
        try:
            if args.kind == "binary":
                with open(path, "rb") as fh:
                    runs = cp.scan_strings(fh, args.min_len, path)
                got = cp.match_commands(runs, rules, label, path)
            elif args.kind == "pcap":
                stats = cp.PcapStats()
                with open(path, "rb") as fh:
                    got = cp.extract_pcap_payloads(fh, label, path, stats)
                if stats.warnings or stats.skipped_linktype:
                    print(f"{path}: {stats.truncated} truncated, {stats.skipped_linktype} non-ethernet records",
                          file=sys.stderr)
            else:
                stats = cp.TextStats()
                with open(path, "rb") as fh:
                    got = cp.load_text_commands(fh, label, path, stats)
                if stats.warnings:
                    print(f"{path}: {stats.warnings} line(s) with invalid UTF-8 replaced", file=sys.stderr)
        except (OSError, cp.CorpusError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        if args.redact:
            got = [cp.redact(c) for c in got]
        print(f"{path}: {len(got)} command(s)", file=sys.stderr)
        out_cmds.extend(got)
    if not out_cmds:
        print("warning: no commands extracted", file=sys.stderr)
    _write_output(args.output, lambda fh: cp.write_jsonl(out_cmds, fh))
    return EXIT_DATA if failures else EXIT_OK


def _write_output(path, writer):
    if path in (None, "-"):
        writer(sys.stdout)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer(fh)


def _load_training(args):
    mal, mal_files = load_corpus(args.malicious, cp.Label.MALICIOUS)
    ben, ben_files = load_corpus(args.benign, cp.Label.BENIGN)
    return mal, mal_files, ben, ben_files


def cmd_train(args) -> int:
    config = build_config(args)
    mal, _, ben, _ = _load_training(args)
    pipe = Pipeline.fit(mal + ben, config)
    modelfile.save(pipe, args.output)
    if args.dump_vocab:
        _write_output(args.dump_vocab, lambda fh: fh.write(pipe.vocab.dumps() + "\n"))
    print(f"trained {config.model} on {len(mal)} malicious / {len(ben)} benign commands; "
          f"d={pipe.pca.d} q={pipe.pca.q}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = build_config(args)
    mal, mal_files, ben, ben_files = _load_training(args)
    kinds = tuple(args.models.split(",")) if args.models else (config.model,)
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad:
        raise UsageError(f"unknown model(s): {', '.join(bad)}")
    if args.level == "file":
        samples = _as_files(mal, mal_files) + _as_files(ben, ben_files)
        if len(kinds) == 1:
            reports = {kinds[0]: detect_files(replace(config, model=kinds[0]), samples)}
        else:
            reports = compare_models(config, samples, kinds, level="file")
    else:
        reports = compare_models(config, mal + ben, kinds)
    if len(kinds) == 1:
        doc = reports[kinds[0]].to_json()
    else:
        doc = {"reports": [r.to_json() for r in reports.values()]}
    text = json.dumps(doc, indent=2) + "\n"
    title = f"{args.level}-level, {config.mode.value}-level tokens, {config.policy.value} vocabulary, k={config.k}"
    table = format_table(reports, title)
    if args.output in (None, "-"):
        sys.stdout.write(text)
        print(table, file=sys.stderr)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(table)
    return EXIT_OK


def cmd_predict(args) -> int:
    pipe = modelfile.load(args.model)
    if args.input in (None, "-"):
        raw = sys.stdin.buffer.read()
    else:
        with open(args.input, "rb") as fh:
            raw = fh.read()
    lines = [ln.strip() for ln in raw.splitlines()]
    lines = [ln for ln in lines if ln]
    probs = pipe.predict_texts(lines)
    out = sys.stdout
    for text, p in zip(lines, probs):
        verdict = "malicious" if p >= 0.5 else "benign"
        out.write(f"{p:.6f}\t{verdict}\t{text.decode('utf-8', errors='replace')}\n")
    out.flush()
    return EXIT_OK


def cmd_synth_benign(args) -> int:
    mal, mal_files = load_corpus(args.malicious, cp.Label.MALICIOUS)
    pool, _ = load_corpus(args.pool, cp.Label.BENIGN)
    dist = fit_count_distribution(_as_files(mal, mal_files))
    n = args.n_files if args.n_files is not None else len(dist.counts)
    files = synthesize_benign_files(pool, dist, n, args.seed)
    _write_output(args.output, lambda fh: write_files_jsonl(files, fh))
    print(f"synthesized {len(files)} benign file(s) from a pool of {len(pool)}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shellgate", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("extract", help="pull commands out of binaries, pcaps or text lists")
    e.add_argument("inputs", nargs="+")
    e.add_argument("--kind", required=True, choices=["binary", "pcap", "text"])
    e.add_argument("--label", required=True, choices=["malicious", "benign"])
    e.add_argument("--rules", help="JSONL rules file (binary kind)")
    e.add_argument("--min-len", type=int, default=cp.DEFAULT_MIN_RUN)
    e.add_argument("--redact", action="store_true", help="mask IPs, user names and home directories")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("train", help="fit vocabulary, PCA and a classifier into one model file")
    t.add_argument("--malicious", required=True)
    t.add_argument("--benign", required=True)
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--dump-vocab")
    _add_pipeline_flags(t)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("evaluate", help="k-fold cross-validation report")
    v.add_argument("--malicious", required=True)
    v.add_argument("--benign", required=True)
    v.add_argument("--level", choices=["command", "file"], default="command")
    v.add_argument("--models", help="comma-separated list, e.g. lr,rf,mlp (overrides --model)")
    v.add_argument("-o", "--output")
    _add_pipeline_flags(v)
    v.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("predict", help="score newline-delimited commands")
    r.add_argument("--model", required=True)
    r.add_argument("input", nargs="?")
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("synth-benign", help="size-matched benign pseudo-files")
    s.add_argument("--malicious", required=True, help="malicious commands (grouped by source_id) or files")
    s.add_argument("--pool", required=True, help="benign command JSONL")
    s.add_argument("--n-files", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_synth_benign)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("SHELLGATE_THREADS")
    if threads is not None and not threads.isdigit():
        print("SHELLGATE_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, cp.CorpusError, modelfile.ModelFileError, FeaturizeError, PcaFitError,
            SplitError, TrainError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
