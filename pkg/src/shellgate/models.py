"""Logistic regression, random forest and a five-hidden-layer MLP, all in numpy.

Every model exposes ``predict_proba(X)`` returning P(malicious) in [0, 1];
the predicted label is 1 iff that probability is >= 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

N_HIDDEN = 5
MIN_WIDTH = 8
THRESHOLD = 0.5


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 64
    l2: float = 1e-4
    seed: int = 0
    n_trees: int = 100
    max_depth: int = 12
    feature_subsample: float | None = None  # None -> sqrt(q)/q
    momentum: float = 0.0
    standardize_inputs: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("epochs", "batch_size", "n_trees", "max_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.feature_subsample is not None and not 0 < self.feature_subsample <= 1:
            raise ValueError("feature_subsample must lie in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    def updated(self, **kw) -> "TrainConfig":
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in kw.items() if k in known and v is not None})


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_from_logits(z, y):
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _check_xy(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    if X.shape[0] < 2:
        raise TrainError("need at least two training samples")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise TrainError("training data contains a single class")
    return X, y


def _scaler(X, enabled):
    if not enabled:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _as_input(model_dim, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model_dim:
        raise ValueError(f"dimension mismatch: model expects {model_dim}, got {X.shape[1]}")
    return X, single


# ---- logistic regression ---------------------------------------------------------

@dataclass
class LrModel:
    weights: np.ndarray
    bias: float
    loss_history: list[float] = field(default_factory=list, compare=False)

    kind = "lr"

    @property
    def q(self) -> int:
        return self.weights.shape[0]

    def decision(self, x):
        X, single = _as_input(self.q, x)
        z = X @ self.weights + self.bias
        return z[0] if single else z

    def predict_proba(self, x):
        z = self.decision(x)
        p = sigmoid(np.atleast_1d(z))
        return float(p[0]) if np.ndim(z) == 0 else p


def lr_loss_grad(w, b, X, y, l2=0.0):
    """Mean logistic loss plus l2/2 ||w||^2, with its gradient in (w, b)."""
    z = X @ w + b
    loss = _bce_from_logits(z, y) + 0.5 * l2 * float(w @ w)
    r = (sigmoid(z) - y) / X.shape[0]
    return loss, X.T @ r + l2 * w, float(r.sum())


def train_lr(X, y, cfg: TrainConfig = TrainConfig()) -> LrModel:
    X, y = _check_xy(X, y)
    mu, sd = _scaler(X, cfg.standardize_inputs)
    Xs = (X - mu) / sd
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    vw, vb = np.zeros_like(w), 0.0
    history = [lr_loss_grad(w, b, Xs, y, cfg.l2)[0]]
    for epoch in range(cfg.epochs):
        for idx in _batches(len(y), cfg.batch_size, rng):
            _, gw, gb = lr_loss_grad(w, b, Xs[idx], y[idx], cfg.l2)
            vw = cfg.momentum * vw - cfg.learning_rate * gw
            vb = cfg.momentum * vb - cfg.learning_rate * gb
            w = w + vw
            b = b + vb
        loss = lr_loss_grad(w, b, Xs, y, cfg.l2)[0]
        if not math.isfinite(loss):
            raise TrainError(f"non-finite LR loss at epoch {epoch + 1}")
        history.append(loss)
    # fold the input scaling back into the weights
    w_raw = w / sd
    return LrModel(w_raw, float(b - w_raw @ mu), history)


# ---- random forest ----------------------------------------------------------------

@dataclass
class Tree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf whose P(malicious) is ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            cur = node[active]
            f = self.feature[cur]
            go_left = X[np.flatnonzero(active), f] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]


def _gini_split(Xt, yn):
    """Best (row of ``Xt``, threshold, weighted impurity); ``Xt`` is features x samples."""
    k, m = Xt.shape
    order = np.argsort(Xt, axis=1)
    xs = np.take_along_axis(Xt, order, axis=1)
    pos_left = np.cumsum(yn[order], axis=1)[:, :-1]
    n_left = np.arange(1, m, dtype=float)
    n_right = m - n_left
    pl = pos_left / n_left
    pr = (yn.sum() - pos_left) / n_right
    imp = (n_left * pl * (1 - pl) + n_right * pr * (1 - pr)) * (2.0 / m)
    # split positions inside a run of equal values are not real thresholds,
    # so the unstable sort order within ties never matters
    imp[xs[:, :-1] >= xs[:, 1:]] = np.inf
    flat = int(np.argmin(imp))
    j, i = divmod(flat, m - 1)
    best = imp[j, i]
    if not np.isfinite(best):
        return None
    lo, hi = xs[j, i], xs[j, i + 1]
    thr = (lo + hi) / 2.0
    if not thr < hi:  # midpoint rounded onto the upper value
        thr = lo
    return j, thr, best


def build_tree(X, y, features, max_depth) -> Tree:
    features = np.asarray(features)
    Xt = np.ascontiguousarray(X[:, features].T)
    feat, thr, left, right, val = [], [], [], [], []

    def new_node():
        for lst, v in ((feat, -1), (thr, 0.0), (left, -1), (right, -1), (val, 0.0)):
            lst.append(v)
        return len(feat) - 1

    stack = [(new_node(), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        p = float(yn.mean())
        val[node] = p
        parent_imp = 2 * p * (1 - p)
        if depth >= max_depth or parent_imp == 0.0 or len(idx) < 2:
            continue
        split = _gini_split(Xt[:, idx], yn)
        if split is None or split[2] >= parent_imp - 1e-12:
            continue
        j, t, _ = split
        f = int(features[j])
        mask = Xt[j, idx] <= t
        li, ri = new_node(), new_node()
        feat[node], thr[node], left[node], right[node] = f, t, li, ri
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return Tree(np.array(feat, dtype=np.int64), np.array(thr, dtype=float),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(val, dtype=float))


@dataclass
class RfModel:
    trees: list[Tree]
    q: int
    feature_subsample: float

    kind = "rf"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_outputs(self, x) -> np.ndarray:
        X, _ = _as_input(self.q, x)
        return np.stack([t.predict(X) for t in self.trees])

    def predict_proba(self, x):
        X, single = _as_input(self.q, x)
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        p = acc / len(self.trees)
        return float(p[0]) if single else p


def n_tree_features(q, feature_subsample) -> int:
    frac = feature_subsample if feature_subsample is not None else math.sqrt(q) / q
    return max(1, min(q, math.ceil(frac * q)))


def train_rf(X, y, cfg: TrainConfig = TrainConfig()) -> RfModel:
    X, y = _check_xy(X, y)
    n, q = X.shape
    k = n_tree_features(q, cfg.feature_subsample)
    rng = np.random.default_rng(cfg.seed)
    trees = []
    for _ in range(cfg.n_trees):
        boot = rng.integers(0, n, size=n)
        feats = np.sort(rng.choice(q, size=k, replace=False))
        trees.append(build_tree(X[boot], y[boot], feats, cfg.max_depth))
    frac = cfg.feature_subsample if cfg.feature_subsample is not None else k / q
    return RfModel(trees, q, float(frac))


# ---- multilayer perceptron -------------------------------------------------------

def hidden_widths(q: int) -> list[int]:
    return [max(MIN_WIDTH, round(q * 0.5 ** k)) for k in range(1, N_HIDDEN + 1)]


@dataclass
class MlpModel:
    layers: list[tuple[np.ndarray, np.ndarray]]  # (W: in x out, b: out)
    loss_history: list[float] = field(default_factory=list, compare=False)

    kind = "mlp"

    @property
    def q(self) -> int:
        return self.layers[0][0].shape[0]

    def logits(self, x):
        X, single = _as_input(self.q, x)
        z = mlp_forward(self.layers, X)[-1][:, 0]
        return z[0] if single else z

    def predict_proba(self, x):
        z = self.logits(x)
        p = sigmoid(np.atleast_1d(z))
        return float(p[0]) if np.ndim(z) == 0 else p


def init_mlp(q: int, rng, widths=None) -> list[tuple[np.ndarray, np.ndarray]]:
    dims = [q] + list(widths or hidden_widths(q)) + [1]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = math.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-lim, lim, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return layers


def mlp_forward(layers, X):
    """Pre-activations of every layer, input first: [X, z1, ..., z_out]."""
    zs = [X]
    a = X
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        zs.append(z)
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return zs


def mlp_loss_grad(layers, X, y, l2=0.0):
    """Mean binary cross-entropy plus l2/2 sum ||W||^2, with gradients per layer."""
    zs = mlp_forward(layers, X)
    z_out = zs[-1][:, 0]
    loss = _bce_from_logits(z_out, y) + 0.5 * l2 * sum(float(np.sum(W * W)) for W, _ in layers)
    delta = ((sigmoid(z_out) - y) / X.shape[0])[:, None]
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        a_prev = zs[i] if i == 0 else np.maximum(zs[i], 0.0)
        grads[i] = (a_prev.T @ delta + l2 * W, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (zs[i] > 0)
    return loss, grads


def train_mlp(X, y, cfg: TrainConfig = TrainConfig(), widths=None) -> MlpModel:
    X, y = _check_xy(X, y)
    mu, sd = _scaler(X, cfg.standardize_inputs)
    Xs = (X - mu) / sd
    rng = np.random.default_rng(cfg.seed)
    layers = init_mlp(X.shape[1], rng, widths)
    vel = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    history = [mlp_loss_grad(layers, Xs, y, cfg.l2)[0]]
    for epoch in range(cfg.epochs):
        for idx in _batches(len(y), cfg.batch_size, rng):
            _, grads = mlp_loss_grad(layers, Xs[idx], y[idx], cfg.l2)
            new_layers, new_vel = [], []
            for (W, b), (gW, gb), (vW, vb) in zip(layers, grads, vel):
                vW = cfg.momentum * vW - cfg.learning_rate * gW
                vb = cfg.momentum * vb - cfg.learning_rate * gb
                new_layers.append((W + vW, b + vb))
                new_vel.append((vW, vb))
            layers, vel = new_layers, new_vel
        loss = mlp_loss_grad(layers, Xs, y, cfg.l2)[0]
        if not math.isfinite(loss):
            raise TrainError(f"non-finite MLP loss at epoch {epoch + 1}")
        history.append(loss)
    W0, b0 = layers[0]
    W0_raw = W0 / sd[:, None]
    layers[0] = (W0_raw, b0 - mu @ W0_raw)
    return MlpModel(layers, history)


# ---- uniform entry points ------------------------------------------------------------

TRAINERS = {"lr": train_lr, "rf": train_rf, "mlp": train_mlp}


def train(kind: str, X, y, cfg: TrainConfig = TrainConfig()):
    try:
        trainer = TRAINERS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(TRAINERS)}") from None
    return trainer(X, y, cfg)


def predict_proba(model, x):
    return model.predict_proba(x)


def predict(model, x):
    p = model.predict_proba(x)
    return int(p >= THRESHOLD) if np.ndim(p) == 0 else (np.asarray(p) >= THRESHOLD).astype(int)
