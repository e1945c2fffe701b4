"""The three classifiers on PCA-reduced command features, plus their sanity checks."""

import numpy as np

from shellgate.featurize import build_vocabulary, feature_matrix
from shellgate.models import (TrainConfig, hidden_widths, init_mlp, lr_loss_grad, mlp_loss_grad, predict, train)
from shellgate.reduce import fit_pca
from shellgate.synthetic import surrogate_corpus

corpus = surrogate_corpus(500, 500, seed=2)
y = np.array([c.label.y for c in corpus])
rng = np.random.default_rng(0)
order = rng.permutation(len(corpus))
train_idx, test_idx = order[:800], order[800:]

# Vocabulary and PCA see the training commands only.
vocab = build_vocabulary([corpus[i] for i in train_idx], "char", (1, 3))
X = feature_matrix([c.text for c in corpus], vocab)
pca = fit_pca(X[train_idx], 0.999)
Z = pca.transform(X)
print(f"d = {pca.d} count features reduced to q = {pca.q} components")
print("MLP hidden widths for this q:", hidden_widths(pca.q))

cfg = TrainConfig(epochs=30, n_trees=50, seed=0)
for kind in ("lr", "rf", "mlp"):
    model = train(kind, Z[train_idx], y[train_idx], cfg)
    acc = (predict(model, Z[test_idx]) == y[test_idx]).mean()
    extra = ""
    if kind == "rf":
        # the forest's probability is the plain mean of its trees
        same = np.array_equal(model.predict_proba(Z[test_idx]), model.tree_outputs(Z[test_idx]).sum(axis=0) / model.n_trees)
        extra = f"  (mean of {model.n_trees} trees: {same})"
    else:
        extra = f"  (loss {model.loss_history[0]:.3f} -> {model.loss_history[-1]:.3f})"
    print(f"{kind.upper():4s} held-out accuracy {acc:.4f}{extra}")


# Analytic gradients against central differences.
def fd(f, p, eps=1e-5):
    g = np.zeros_like(p)
    for i in range(p.size):
        old = p.flat[i]
        p.flat[i] = old + eps
        up = f()
        p.flat[i] = old - eps
        down = f()
        p.flat[i] = old
        g.flat[i] = (up - down) / (2 * eps)
    return g


Xs, ys = rng.normal(size=(5, 3)), np.array([1.0, 0, 1, 0, 0])
w = rng.normal(size=3)
_, gw, _ = lr_loss_grad(w, 0.1, Xs, ys, 1e-3)
print("\nLR  grad max abs diff vs finite differences: %.1e" % np.abs(gw - fd(lambda: lr_loss_grad(w, 0.1, Xs, ys, 1e-3)[0], w)).max())

layers = init_mlp(3, rng, [6, 5, 4, 4, 3])
_, grads = mlp_loss_grad(layers, Xs[:3], ys[:3])
W0 = layers[0][0]
num = fd(lambda: mlp_loss_grad(layers, Xs[:3], ys[:3])[0], W0)
print("MLP first-layer grad max abs diff: %.1e" % np.abs(grads[0][0] - num).max())
