"""PCA over count features: fit on a training set, project new vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .featurize import FeatureVector

DEFAULT_VARIANCE = 0.999
# dense SVD only when d <= distinct rows and the centered matrix stays this small
DENSE_CELL_LIMIT = 20_000_000


class PcaFitError(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    variance_target: float
    total_variance: float
    scale: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def q(self) -> int:
        return self.components.shape[0]

    @property
    def retained(self) -> float:
        return float(self.explained_variance.sum() / self.total_variance)

    def transform(self, X) -> np.ndarray:
        return transform(self, X)

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        X = Z @ self.components
        if self.scale is not None:
            X = X * self.scale
        return X + self.mean


def _as_matrix(data):
    if isinstance(data, FeatureVector):
        data = [data]
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], FeatureVector):
        dims = {v.dim for v in data}
        if len(dims) != 1:
            raise PcaFitError(f"feature vectors disagree on dimension: {sorted(dims)}")
        rows = np.repeat(np.arange(len(data)), [len(v.indices) for v in data])
        cols = np.concatenate([v.indices for v in data])
        vals = np.concatenate([v.counts for v in data]).astype(float)
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(data), dims.pop()))
    if sp.issparse(data):
        return data.tocsr().astype(float)
    return np.atleast_2d(np.asarray(data, dtype=float))


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each row made non-negative; first one wins on ties
    pivot = np.argmax(np.abs(V), axis=1)
    signs = np.where(V[np.arange(V.shape[0]), pivot] < 0, -1.0, 1.0)
    return V * signs[:, None]


def _unique_rows(X):
    """Distinct rows of ``X`` and their multiplicities (first-seen order)."""
    if sp.issparse(X):
        X = X.tocsr()
        X.sort_indices()
        seen: dict[tuple[bytes, bytes], int] = {}
        first, counts = [], []
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            key = (X.indices[lo:hi].tobytes(), X.data[lo:hi].tobytes())
            j = seen.get(key)
            if j is None:
                seen[key] = len(first)
                first.append(i)
                counts.append(1)
            else:
                counts[j] += 1
        return X[first], np.asarray(counts, dtype=float)
    _, first, counts = np.unique(X, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first)
    return X[first[order]], counts[order].astype(float)


def _spectrum_dense(U, w, mean, scale):
    Xc = (U.toarray() if sp.issparse(U) else U) - mean
    if scale is not None:
        Xc = Xc / scale
    _, s, Vt = np.linalg.svd(Xc * w[:, None], full_matrices=False)
    return s ** 2, Vt


def _spectrum_gram(U, w, mean, scale):
    """Eigen-decomposition on the sample side, for d larger than the number of distinct rows."""
    if scale is not None:
        U = U @ sp.diags(1.0 / scale) if sp.issparse(U) else U / scale
        mean = mean / scale
    Um = np.asarray(U @ mean).ravel()
    G = U @ U.T
    G = G.toarray() if sp.issparse(G) else np.asarray(G)
    G = G - Um[:, None] - Um[None, :] + mean @ mean
    G = w[:, None] * G * w[None, :]
    G = (G + G.T) / 2
    ev, V = np.linalg.eigh(G)
    order = np.argsort(ev)[::-1]
    ev, V = np.clip(ev[order], 0.0, None), V[:, order]
    keep = ev > ev[0] * len(ev) * np.finfo(float).eps if ev[0] > 0 else np.zeros(len(ev), dtype=bool)
    ev, V = ev[keep], V[:, keep]
    # V^T = S^-1 V^T W (U - 1 mean^T), with the centering applied implicitly
    WV = V * w[:, None]
    Vt = np.asarray((U.T @ WV).T) - np.outer(WV.sum(axis=0), mean)
    return ev, Vt / np.sqrt(ev)[:, None]


def fit_pca(data, variance_target: float = DEFAULT_VARIANCE, standardize: bool = False,
            max_fit_samples: int | None = None, seed: int = 0) -> PcaModel:
    """Fit PCA keeping the fewest components whose variance reaches ``variance_target``.

    ``data`` may be a list of FeatureVector, a dense array or a scipy sparse matrix.
    With ``standardize`` each feature is also divided by its standard deviation
    (zero-variance features left unscaled).
    """
    if not 0 < variance_target <= 1:
        raise PcaFitError(f"variance_target must lie in (0, 1], got {variance_target}")
    X = _as_matrix(data)
    n, d = X.shape
    if n < 2:
        raise PcaFitError("PCA needs at least two samples")
    if max_fit_samples is not None and n > max_fit_samples:
        rows = np.sort(np.random.default_rng(seed).choice(n, max_fit_samples, replace=False))
        X = X[rows]
        n = max_fit_samples

    mean = np.asarray(X.mean(axis=0)).ravel()
    scale = None
    if standardize:
        sq = np.asarray(X.multiply(X).mean(axis=0)).ravel() if sp.issparse(X) else (X ** 2).mean(axis=0)
        std = np.sqrt(np.clip(sq - mean ** 2, 0.0, None))
        scale = np.where(std > 0, std, 1.0)

    # duplicate rows enter the scatter matrix once, weighted by sqrt(multiplicity)
    U, mult = _unique_rows(X)
    w = np.sqrt(mult)
    if d <= U.shape[0] and U.shape[0] * d <= DENSE_CELL_LIMIT:
        ev, Vt = _spectrum_dense(U, w, mean, scale)
    else:
        ev, Vt = _spectrum_gram(U, w, mean, scale)

    ev = ev / (n - 1)
    total = float(ev.sum())
    if not total > 0:
        raise PcaFitError("training data has zero total variance")
    frac = np.cumsum(ev) / total
    q = min(int(np.searchsorted(frac, variance_target)) + 1, len(ev))
    return PcaModel(
        mean=mean,
        components=_fix_signs(Vt[:q]),
        explained_variance=ev[:q].copy(),
        variance_target=float(variance_target),
        total_variance=total,
        scale=scale,
    )


def transform(model: PcaModel, x) -> np.ndarray:
    """Project onto the components: ``components @ (x - mean)``.

    A single FeatureVector or 1-D array returns a vector of length q; matrices
    return an (n, q) array.
    """
    single = isinstance(x, FeatureVector) or (not sp.issparse(x) and np.ndim(x) == 1)
    X = _as_matrix(x)
    if X.shape[1] != model.d:
        raise ValueError(f"dimension mismatch: model expects {model.d}, got {X.shape[1]}")
    if model.scale is not None:
        X = X @ sp.diags(1.0 / model.scale) if sp.issparse(X) else X / model.scale
        mean = model.mean / model.scale
    else:
        mean = model.mean
    Z = np.asarray(X @ model.components.T) - model.components @ mean
    return Z[0] if single else Z
