"""Supervised Poisson-gamma NMF with label-driven coefficient sparsity.

Coefficients are exponential with a rate shared by all documents of a label
and component, v_{i tau} ~ Exp(lambda_{i z_tau}), and the rates carry gamma
priors. Since every document has exactly one label, the log of the selected
rate is the selected log-rate, so the Jensen-relaxed bound optimized here
coincides with the exact bound.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from .numerics import gamma_expected_logpdf
from .vbnmf import (
    FitConfig,
    GammaStats,
    VbnmfHyper,
    _as_data,
    _posterior,
    _sums,
    converged,
    data_constant,
    dead_components,
    gamma_block,
    likelihood_term,
    optimize_scale_hyper,
    reconstruct,
    update_t,
)

logger = logging.getLogger(__name__)

RATE_CLAMP = 1e12

LambdaStats = GammaStats


@dataclass(frozen=True)
class SupervisedHyper:
    a_t: float = 1.0
    b_t: float = 1.0
    a_lambda: float = 1.0
    b_lambda: float = 1.0
    burn_in: int = 10
    optimize_b_t: bool = True
    optimize_b_lambda: bool = False

    def __post_init__(self):
        for name in ("a_t", "b_t", "a_lambda", "b_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass
class SupervisedModel:
    T: GammaStats
    V: GammaStats
    lam: LambdaStats
    hyper: SupervisedHyper
    labels: np.ndarray
    n_labels: int
    bound_trace: List[float] = field(default_factory=list)
    seed: int = 0
    iterations_run: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def Delta(self):
        return label_indicator(self.labels, self.n_labels)

    @property
    def rank(self):
        return self.T.E.shape[1]

    @property
    def n_terms(self):
        return self.T.E.shape[0]

    @property
    def n_docs(self):
        return self.V.E.shape[1]

    def coefficient_prior(self):
        """Unsupervised hyperparameters used to project unlabeled documents.

        Test documents have no label, so they get the shape-1 prior whose
        scale best fits the training coefficients.
        """
        return VbnmfHyper(a_t=self.hyper.a_t, b_t=self.hyper.b_t, a_v=1.0,
                          b_v=optimize_scale_hyper(self.V, 1.0),
                          optimize_b_t=False, optimize_b_v=False)


def label_indicator(labels, n_labels=None):
    """One-hot N x L matrix from integer labels."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels must be a nonempty 1-D array")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if n_labels is None:
        n_labels = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= n_labels:
        raise ValueError(f"labels must lie in [0, {n_labels})")
    Delta = np.zeros((labels.size, n_labels))
    Delta[np.arange(labels.size), labels] = 1.0
    return Delta


def _check_delta(Delta):
    Delta = np.asarray(Delta, dtype=np.float64)
    if Delta.ndim != 2 or not np.all((Delta == 0) | (Delta == 1)) \
            or not np.all(Delta.sum(axis=1) == 1):
        raise ValueError("Delta must be one-hot by rows")
    return Delta


def update_v_sup(Sigma_v, E_t, E_lambda, Delta):
    Delta = _check_delta(Delta)
    shape = 1.0 + Sigma_v
    inv_scale = E_lambda @ Delta.T + np.sum(E_t, axis=0)[:, None]
    return _posterior(shape, inv_scale)


def _clamp_rates(stats):
    over = stats.E > RATE_CLAMP
    if not np.any(over):
        return stats, 0
    scale = np.where(over, RATE_CLAMP / stats.shape, stats.scale)
    return GammaStats.from_params(stats.shape, scale), int(np.sum(over))


def update_lambda(E_v, Delta, hyper):
    Delta = _check_delta(Delta)
    counts = Delta.sum(axis=0)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"labels without documents: {empty}")
    shape = np.broadcast_to(hyper.a_lambda + counts[None, :], (E_v.shape[0], Delta.shape[1]))
    inv_scale = 1.0 / hyper.b_lambda + E_v @ Delta
    return _posterior(shape, inv_scale)


def burn_in_rates(E_v_init, Delta, hyper):
    """Rates held fixed during burn-in: all equal to 1 / mean(initial <v>).

    q(lambda) is kept as a proper gamma (the shape the first real update
    will have) so the bound stays comparable across the end of burn-in.
    """
    rate = 1.0 / float(np.mean(E_v_init))
    counts = Delta.sum(axis=0)
    shape = np.broadcast_to(hyper.a_lambda + counts[None, :], (E_v_init.shape[0], Delta.shape[1]))
    return GammaStats.from_params(shape, rate / shape)


def compute_relaxed_bound(X, model, constant=None, rec=None):
    """Lower bound with <ln sum_l delta(z-l) lambda_il> replaced by sum_l delta <ln lambda_il>.

    A lambda block without shape/scale is treated as fixed point values:
    it then contributes no prior or entropy terms.
    """
    X = _as_data(X)
    if X.shape != (model.n_terms, model.n_docs):
        raise ValueError(f"X has shape {X.shape}, model expects "
                         f"{(model.n_terms, model.n_docs)}")
    h = model.hyper
    Delta = model.Delta
    lam = model.lam
    v_prior = float(np.sum(lam.L @ Delta.T) - np.sum((lam.E @ Delta.T) * model.V.E))
    total = (likelihood_term(X, model.T, model.V, constant, rec)
             + gamma_block(model.T, h.a_t, h.b_t)
             + v_prior + model.V.entropy())
    if lam.shape is not None:
        total += float(np.sum(gamma_expected_logpdf(lam.E, lam.L, h.a_lambda, h.b_lambda)))
        total += lam.entropy()
    return total


def fit_supervised(X, labels, config, hyper=None, n_labels=None):
    """Fit the supervised model on training documents with known labels."""
    X = _as_data(X)
    hyper = hyper or SupervisedHyper()
    labels = np.asarray(labels)
    if labels.shape != (X.shape[1],):
        raise ValueError("need exactly one label per document (column of X)")
    Delta = label_indicator(labels, n_labels)
    n_labels = Delta.shape[1]
    if np.any(Delta.sum(axis=0) == 0):
        raise ValueError("every label must occur in the training set")
    if config.rank < 1:
        raise ValueError("rank must be >= 1")

    rng = np.random.default_rng(config.seed)
    T = GammaStats.point(rng.gamma(hyper.a_t, hyper.b_t, size=(X.shape[0], config.rank)))
    V = GammaStats.point(rng.exponential(1.0, size=(config.rank, X.shape[1])))
    lam = burn_in_rates(V.E, Delta, hyper)

    constant = data_constant(X)
    rec = reconstruct(X, T.L, V.L)
    warnings = []
    trace = []
    it = 0
    for it in range(1, config.max_iters + 1):
        Sigma_t, Sigma_v = _sums(X, rec)
        T = update_t(Sigma_t, V.E, hyper)
        if hyper.optimize_b_t:
            hyper = replace(hyper, b_t=optimize_scale_hyper(T, hyper.a_t))
        V = update_v_sup(Sigma_v, T.E, lam.E, Delta)
        if it > hyper.burn_in:
            lam, clamped = _clamp_rates(update_lambda(V.E, Delta, hyper))
            if clamped:
                warnings.append(f"iteration {it}: clamped {clamped} rates")
            if hyper.optimize_b_lambda:
                hyper = replace(hyper, b_lambda=optimize_scale_hyper(lam, hyper.a_lambda))
        rec = reconstruct(X, T.L, V.L)
        state = SupervisedModel(T, V, lam, hyper, labels, n_labels)
        trace.append(compute_relaxed_bound(X, state, constant, rec))
        if it > hyper.burn_in and converged(trace, config.tol):
            break

    model = SupervisedModel(T, V, lam, hyper, labels, n_labels, trace, config.seed, it, warnings)
    dead = dead_components(T.E)
    if dead:
        model.warnings.append(f"collapsed components: {dead}")
        logger.warning("supervised vbnmf: collapsed components %s", dead)
    return model
