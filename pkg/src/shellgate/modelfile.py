"""Single-file persistence for a fitted pipeline.

Layout (all integers and floats little-endian)::

    b"SHLC" | version:u8 | section*
    section := tag:4s | length:u64 | payload[length]

Sections, in order: CONF (JSON), VOCB (JSON), PCA_ (binary), MODL (binary),
END_ (empty). Every section length precedes its payload, so a file cut at any
byte fails to load.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .featurize import Vocabulary
from .models import LrModel, MlpModel, RfModel, Tree
from .pipeline import Pipeline, PipelineConfig
from .reduce import PcaModel

MAGIC = b"SHLC"
VERSION = 1
_KIND_TAG = {"lr": 1, "rf": 2, "mlp": 3}


class ModelFileError(ValueError):
    pass


def _f64(a) -> bytes:
    return np.asarray(a, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise ModelFileError(f"truncated model file (need {n} bytes at offset {self.pos})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)

    def done(self) -> bool:
        return self.pos == len(self.buf)


# ---- PCA -------------------------------------------------------------------------

def pack_pca(p: PcaModel) -> bytes:
    head = struct.pack("<QQddB", p.d, p.q, p.variance_target, p.total_variance, p.scale is not None)
    parts = [head, _f64(p.mean), _f64(p.explained_variance), _f64(p.components)]
    if p.scale is not None:
        parts.append(_f64(p.scale))
    return b"".join(parts)


def unpack_pca(buf: bytes) -> PcaModel:
    r = _Reader(buf)
    d, q, target, total, has_scale = r.unpack("<QQddB")
    mean = r.f64(d)
    ev = r.f64(q)
    comps = r.f64(q * d).reshape(q, d)
    scale = r.f64(d) if has_scale else None
    if not r.done():
        raise ModelFileError("trailing bytes in PCA section")
    return PcaModel(mean, comps, ev, target, total, scale)


# ---- classifiers -----------------------------------------------------------------

def _pack_tree(t: Tree) -> bytes:
    # preorder: (feature:i64, threshold:f64, value:f64); children follow their parent
    out = []

    def walk(i):
        out.append(struct.pack("<qdd", int(t.feature[i]), float(t.threshold[i]), float(t.value[i])))
        if t.feature[i] >= 0:
            walk(t.left[i])
            walk(t.right[i])

    walk(0)
    return struct.pack("<Q", len(out)) + b"".join(out)


def _unpack_tree(r: _Reader) -> Tree:
    (n,) = r.unpack("<Q")
    raw = [r.unpack("<qdd") for _ in range(n)]
    feat, thr, val = [], [], []
    left, right = [-1] * n, [-1] * n
    pos = 0

    def build():
        nonlocal pos
        if pos >= n:
            raise ModelFileError("malformed tree")
        i = pos
        pos += 1
        f, t, v = raw[i]
        feat.append(f)
        thr.append(t)
        val.append(v)
        if f >= 0:
            left[i] = build()
            right[i] = build()
        return i

    build()
    if pos != n:
        raise ModelFileError("malformed tree: unused nodes")
    return Tree(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(val))


def pack_model(m) -> bytes:
    kind = m.kind
    out = [struct.pack("<B", _KIND_TAG[kind])]
    if kind == "lr":
        out += [struct.pack("<Qd", m.q, m.bias), _f64(m.weights)]
    elif kind == "rf":
        out.append(struct.pack("<QQd", m.q, m.n_trees, m.feature_subsample))
        out += [_pack_tree(t) for t in m.trees]
    else:
        out.append(struct.pack("<Q", len(m.layers)))
        for W, b in m.layers:
            out += [struct.pack("<QQ", *W.shape), _f64(W), _f64(b)]
    return b"".join(out)


def unpack_model(buf: bytes):
    r = _Reader(buf)
    (tag,) = r.unpack("<B")
    if tag == 1:
        q, bias = r.unpack("<Qd")
        model = LrModel(r.f64(q), bias)
    elif tag == 2:
        q, n_trees, frac = r.unpack("<QQd")
        model = RfModel([_unpack_tree(r) for _ in range(n_trees)], q, frac)
    elif tag == 3:
        (n_layers,) = r.unpack("<Q")
        layers = []
        for _ in range(n_layers):
            rows, cols = r.unpack("<QQ")
            layers.append((r.f64(rows * cols).reshape(rows, cols), r.f64(cols)))
        model = MlpModel(layers)
    else:
        raise ModelFileError(f"unknown model tag {tag}")
    if not r.done():
        raise ModelFileError("trailing bytes in model section")
    return model


# ---- whole file --------------------------------------------------------------------

def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def dumps(pipe: Pipeline) -> bytes:
    conf = json.dumps(pipe.config.to_json(), sort_keys=True).encode()
    return b"".join([
        MAGIC, struct.pack("<B", VERSION),
        _section(b"CONF", conf),
        _section(b"VOCB", pipe.vocab.dumps().encode()),
        _section(b"PCA_", pack_pca(pipe.pca)),
        _section(b"MODL", pack_model(pipe.model)),
        _section(b"END_", b""),
    ])


def loads(buf: bytes) -> Pipeline:
    r = _Reader(bytes(buf))
    if r.take(4) != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version}")
    sections = {}
    for expected in (b"CONF", b"VOCB", b"PCA_", b"MODL", b"END_"):
        tag = r.take(4)
        if tag != expected:
            raise ModelFileError(f"expected section {expected!r}, found {tag!r}")
        (length,) = r.unpack("<Q")
        sections[tag] = r.take(length)
    if not r.done():
        raise ModelFileError("trailing bytes after END_ section")
    try:
        config = PipelineConfig.from_json(json.loads(sections[b"CONF"]))
        vocab = Vocabulary.loads(sections[b"VOCB"].decode())
    except (ValueError, TypeError, KeyError) as exc:
        raise ModelFileError(f"corrupt config or vocabulary: {exc}") from exc
    pca = unpack_pca(sections[b"PCA_"])
    model = unpack_model(sections[b"MODL"])
    width = len(vocab) + (2 if config.with_stats else 0)
    if pca.d != width or getattr(model, "q", pca.q) != pca.q:
        raise ModelFileError("section dimensions disagree")
    return Pipeline(config, vocab, pca, model)


def save(pipe: Pipeline, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(pipe))


def load(path) -> Pipeline:
    with open(path, "rb") as fh:
        return loads(fh.read())


