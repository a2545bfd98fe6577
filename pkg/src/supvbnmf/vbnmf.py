"""Poisson-gamma variational Bayesian NMF.

X (terms x documents) is modelled as X ~ Poisson(T V) with independent gamma
priors on the entries of T and V. The posterior is a product of gamma
factors, stored through their sufficient statistics <x> (E) and <ln x> (L)
together with the shape/scale parameters that produced them.

The latent sources S are never materialized; their row and column sums are
obtained with the usual ratio trick, see :func:`e_step_sums`.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .numerics import gamma_entropy, gamma_expected_logpdf, gamma_stats, ln_gamma

logger = logging.getLogger(__name__)

TINY = 1e-300
DEAD_COMPONENT = 1e-10


class DegenerateStateError(ArithmeticError):
    """The reconstruction vanished at a position where X is positive."""


@dataclass
class GammaStats:
    E: np.ndarray
    L: np.ndarray
    shape: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    @classmethod
    def from_params(cls, shape, scale):
        shape = np.asarray(shape, dtype=np.float64)
        scale = np.asarray(scale, dtype=np.float64)
        E, L = gamma_stats(shape, scale)
        return cls(E, L, shape, scale)

    @classmethod
    def point(cls, E):
        """Degenerate statistics with <ln x> = ln <x> (used at initialization)."""
        E = np.maximum(np.asarray(E, dtype=np.float64), TINY)
        return cls(E, np.log(E))

    def entropy(self):
        if self.shape is None:
            raise ValueError("entropy needs the shape/scale parameters")
        return float(np.sum(gamma_entropy(self.shape, self.scale)))


@dataclass(frozen=True)
class VbnmfHyper:
    a_t: float = 1.0
    b_t: float = 1.0
    a_v: float = 1.0
    b_v: float = 1.0
    optimize_b_t: bool = True
    optimize_b_v: bool = True

    def __post_init__(self):
        for name in ("a_t", "b_t", "a_v", "b_v"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FitConfig:
    rank: int
    max_iters: int = 200
    tol: float = 1e-6
    seed: int = 0


@dataclass
class VbnmfModel:
    T: GammaStats
    V: GammaStats
    hyper: VbnmfHyper
    bound_trace: List[float] = field(default_factory=list)
    seed: int = 0
    iterations_run: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def rank(self):
        return self.T.E.shape[1]

    @property
    def n_terms(self):
        return self.T.E.shape[0]

    @property
    def n_docs(self):
        return self.V.E.shape[1]


def _as_data(X):
    """Validate X and return it as CSR; all updates only touch its nonzeros."""
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64)
        X.eliminate_zeros()
        vals = X.data
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D matrix")
        vals = X
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("X must be a nonempty 2-D matrix")
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("X must be finite and nonnegative")
    X = sp.csr_matrix(X)
    X.eliminate_zeros()
    X.sort_indices()
    return X


def init_model(n_terms, n_docs, rank, hyper, seed):
    """Draw the initial means i.i.d. from the priors (T first, then V)."""
    if min(n_terms, n_docs, rank) < 1:
        raise ValueError("n_terms, n_docs and rank must all be >= 1")
    rng = np.random.default_rng(seed)
    E_t = rng.gamma(hyper.a_t, hyper.b_t, size=(n_terms, rank))
    E_v = rng.gamma(hyper.a_v, hyper.b_v, size=(rank, n_docs))
    return VbnmfModel(GammaStats.point(E_t), GammaStats.point(E_v), hyper, seed=seed)


def _stable_exp(L, axis):
    # Rows of exp(L_t) and columns of exp(L_v) may be rescaled freely: the
    # factor cancels in Xi, so shift by the max to avoid underflow.
    shift = np.max(L, axis=axis, keepdims=True)
    return np.maximum(np.exp(L - shift), TINY), shift


class Reconstruction(NamedTuple):
    """exp(L_t) exp(L_v) evaluated at the nonzeros of a CSR matrix X.

    ``Pt``/``Pv`` are exp(L) shifted by ``shift_t`` (per row) and ``shift_v``
    (per column); ``r`` holds the shifted products at the nonzeros and
    ``log_shift`` the matching sum of shifts.
    """
    Pt: np.ndarray
    Pv: np.ndarray
    r: np.ndarray
    log_shift: np.ndarray


def reconstruct(X, L_t, L_v):
    Pt, shift_t = _stable_exp(L_t, axis=1)
    Pv, shift_v = _stable_exp(L_v, axis=0)
    rows = np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))
    cols = X.indices
    r = np.einsum("ni,ni->n", Pt[rows], Pv.T[cols])
    return Reconstruction(Pt, Pv, r, shift_t[rows, 0] + shift_v[0, cols])


def _sums(X, rec):
    if np.any(~(rec.r > 0)):
        raise DegenerateStateError("zero reconstruction where X > 0")
    Xi = sp.csr_matrix((X.data / rec.r, X.indices, X.indptr), shape=X.shape)
    Sigma_v = rec.Pv * np.asarray(Xi.T @ rec.Pt).T
    Sigma_t = rec.Pt * np.asarray(Xi @ rec.Pv.T)
    return Sigma_t, Sigma_v


def e_step_sums(X, L_t, L_v):
    """Row/column sums of the expected sources <s_{nu i tau}> = x p.

    Returns ``(Sigma_t, Sigma_v)`` with shapes (terms x I) and (I x docs).
    Positions where X is zero contribute nothing.
    """
    X = _as_data(X)
    return _sums(X, reconstruct(X, L_t, L_v))


def _posterior(shape, inv_scale):
    if np.any(~(inv_scale > 0)):
        raise ValueError("non-positive rate in gamma update")
    return GammaStats.from_params(shape, 1.0 / inv_scale)


def update_t(Sigma_t, E_v, hyper):
    shape = hyper.a_t + Sigma_t
    inv_scale = 1.0 / hyper.b_t + np.sum(E_v, axis=1)[None, :]
    return _posterior(shape, np.broadcast_to(inv_scale, shape.shape))


def update_v_unsup(Sigma_v, E_t, hyper):
    shape = hyper.a_v + Sigma_v
    inv_scale = 1.0 / hyper.b_v + np.sum(E_t, axis=0)[:, None]
    return _posterior(shape, np.broadcast_to(inv_scale, shape.shape))


def optimize_scale_hyper(stats, a):
    """Scale b maximizing sum <ln G(x|a,b)>, i.e. mean(<x>) / a."""
    if not a > 0:
        raise ValueError("shape must be positive")
    E = stats.E if isinstance(stats, GammaStats) else np.asarray(stats)
    if E.size == 0:
        raise ValueError("empty statistics")
    mean = float(np.mean(E))
    if not mean > 0:
        raise ValueError("mean of <x> is zero; scale is undefined")
    return mean / a


def data_constant(X):
    """sum ln Gamma(x + 1) over the nonzeros; constant during a fit."""
    return float(np.sum(ln_gamma(_as_data(X).data + 1.0)))


def likelihood_term(X, T, V, constant=None, rec=None):
    """<ln p(X,S|T,V)> + H[q(S)] with q(S) optimal for the current (L_t, L_v).

    This is sum x ln(sum_i exp(<ln t> + <ln v>)) - sum <t><v> - sum ln Gamma(x+1).
    """
    X = _as_data(X)
    if rec is None:
        rec = reconstruct(X, T.L, V.L)
    data = float(np.dot(X.data, np.log(rec.r) + rec.log_shift))
    mass = float(np.sum(T.E, axis=0) @ np.sum(V.E, axis=1))
    if constant is None:
        constant = data_constant(X)
    return data - mass - constant


def gamma_block(stats, a, b):
    """Expected log prior plus entropy for a block of gamma factors."""
    return float(np.sum(gamma_expected_logpdf(stats.E, stats.L, a, b))) + stats.entropy()


def compute_bound(X, model, constant=None, rec=None):
    """Variational lower bound of the unsupervised model."""
    X = _as_data(X)
    if X.shape != (model.n_terms, model.n_docs):
        raise ValueError(f"X has shape {X.shape}, model expects "
                         f"{(model.n_terms, model.n_docs)}")
    h = model.hyper
    return (likelihood_term(X, model.T, model.V, constant, rec)
            + gamma_block(model.T, h.a_t, h.b_t)
            + gamma_block(model.V, h.a_v, h.b_v))


def converged(trace, tol):
    if len(trace) < 2:
        return False
    prev, cur = trace[-2], trace[-1]
    return abs(cur - prev) <= tol * max(abs(prev), TINY)


def dead_components(E_t):
    return [int(i) for i in np.flatnonzero(np.max(E_t, axis=0) < DEAD_COMPONENT)]


def fit(X, config, hyper=None):
    """Fit the unsupervised model; returns a :class:`VbnmfModel`."""
    X = _as_data(X)
    hyper = hyper or VbnmfHyper()
    model = init_model(X.shape[0], X.shape[1], config.rank, hyper, config.seed)
    T, V = model.T, model.V
    constant = data_constant(X)
    rec = reconstruct(X, T.L, V.L)
    trace = []
    it = 0
    for it in range(1, config.max_iters + 1):
        Sigma_t, Sigma_v = _sums(X, rec)
        T = update_t(Sigma_t, V.E, hyper)
        if hyper.optimize_b_t:
            hyper = replace(hyper, b_t=optimize_scale_hyper(T, hyper.a_t))
        V = update_v_unsup(Sigma_v, T.E, hyper)
        if hyper.optimize_b_v:
            hyper = replace(hyper, b_v=optimize_scale_hyper(V, hyper.a_v))
        rec = reconstruct(X, T.L, V.L)
        trace.append(compute_bound(X, VbnmfModel(T, V, hyper), constant, rec))
        if converged(trace, config.tol):
            break

    model = VbnmfModel(T, V, hyper, trace, config.seed, it)
    dead = dead_components(T.E)
    if dead:
        model.warnings.append(f"collapsed components: {dead}")
        logger.warning("vbnmf: collapsed components %s", dead)
    return model


def project(X_test, T, hyper, config):
    """Infer coefficients for new documents with the components T held fixed.

    ``hyper`` supplies the coefficient prior (a_v, b_v); it is not re-optimized.
    Only ``config.max_iters``, ``config.tol`` and ``config.seed`` are used.
    """
    X_test = _as_data(X_test)
    if X_test.shape[0] != T.E.shape[0]:
        raise ValueError(f"X_test has {X_test.shape[0]} terms, components have "
                         f"{T.E.shape[0]}")
    rank = T.E.shape[1]
    rng = np.random.default_rng(config.seed)
    V = GammaStats.point(rng.gamma(hyper.a_v, hyper.b_v, size=(rank, X_test.shape[1])))
    constant = data_constant(X_test)
    rec = reconstruct(X_test, T.L, V.L)
    trace = []
    for _ in range(config.max_iters):
        _, Sigma_v = _sums(X_test, rec)
        V = update_v_unsup(Sigma_v, T.E, hyper)
        rec = reconstruct(X_test, T.L, V.L)
        # the T block of the bound is constant here
        trace.append(likelihood_term(X_test, T, V, constant, rec)
                     + gamma_block(V, hyper.a_v, hyper.b_v))
        if converged(trace, config.tol):
            break
    return V
