"""PCA baseline: centered principal directions of the document columns."""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

# below this many documents/terms a dense SVD is cheap and exact
_DENSE_LIMIT = 600


@dataclass
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray

    @property
    def dim(self):
        return self.basis.shape[1]


def _fix_signs(basis):
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def pca_fit(X, d):
    """Top-d principal directions of X (terms x docs), documents as samples."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n_terms, n_docs = X.shape
    if not 1 <= d <= min(n_terms, n_docs):
        raise ValueError(f"d must be in [1, {min(n_terms, n_docs)}], got {d}")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    denom = max(n_docs - 1, 1)

    if min(n_terms, n_docs) <= _DENSE_LIMIT or d >= min(n_terms, n_docs) - 1:
        U, s, _ = np.linalg.svd(Xc, full_matrices=False)
        basis, var = U[:, :d], s[:d] ** 2 / denom
    elif n_docs < n_terms:
        # eigenvectors of the doc x doc Gram matrix map back through Xc
        w, u = eigsh(Xc.T @ Xc, k=d, which="LA", v0=np.ones(n_docs))
        order = np.argsort(w)[::-1]
        w, u = np.maximum(w[order], 0.0), u[:, order]
        basis = Xc @ u / np.sqrt(np.where(w > 0, w, 1.0))
        var = w / denom
    else:
        w, u = eigsh(Xc @ Xc.T, k=d, which="LA", v0=np.ones(n_terms))
        order = np.argsort(w)[::-1]
        basis, var = u[:, order], np.maximum(w[order], 0.0) / denom
    return PcaModel(mean, _fix_signs(basis), var)


def pca_project(X, model):
    """Coordinates basis^T (X - mean), one column per document."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.mean.shape[0]:
        raise ValueError(f"expected {model.mean.shape[0]} terms, got shape {X.shape}")
    return model.basis.T @ (X - model.mean[:, None])


def pca_reconstruct(coords, model):
    return model.mean[:, None] + model.basis @ coords
