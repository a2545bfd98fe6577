import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gamma_prior_and_entropy, source_terms
from supvbnmf.numerics import digamma
from supvbnmf.vbnmf import (
    DegenerateStateError,
    FitConfig,
    GammaStats,
    VbnmfHyper,
    VbnmfModel,
    compute_bound,
    e_step_sums,
    fit,
    init_model,
    optimize_scale_hyper,
    project,
    update_t,
    update_v_unsup,
)


def random_stats(rng, shape):
    return GammaStats.from_params(rng.uniform(0.3, 3.0, shape), rng.uniform(0.2, 2.0, shape))


def nonincreasing_steps(trace, rel=1e-9):
    t = np.asarray(trace)
    return np.flatnonzero(np.diff(t) < -rel * np.abs(t[:-1]))


# --- initialization ---------------------------------------------------------

def test_init_deterministic():
    h = VbnmfHyper()
    a, b = init_model(7, 9, 3, h, 5), init_model(7, 9, 3, h, 5)
    np.testing.assert_array_equal(a.T.E, b.T.E)
    np.testing.assert_array_equal(a.V.L, b.V.L)
    assert not np.array_equal(a.T.E, init_model(7, 9, 3, h, 6).T.E)


def test_init_draws_from_prior():
    m = init_model(400, 2, 50, VbnmfHyper(a_t=1, b_t=1), 0)
    n = m.T.E.size
    # exponential(1): mean 1, sd 1
    assert abs(m.T.E.mean() - 1.0) < 3 / np.sqrt(n)
    np.testing.assert_array_equal(m.T.L, np.log(m.T.E))


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        init_model(3, 3, 0, VbnmfHyper(), 0)


# --- E-step -----------------------------------------------------------------

def test_conservation_random():
    rng = np.random.default_rng(1)
    for _ in range(10):
        X = rng.gamma(0.5, 1.0, (6, 8)) * (rng.random((6, 8)) < 0.6)
        St, Sv = e_step_sums(X, rng.normal(size=(6, 3)), rng.normal(size=(3, 8)))
        np.testing.assert_allclose(St.sum(axis=1), X.sum(axis=1), rtol=1e-12)
        np.testing.assert_allclose(Sv.sum(axis=0), X.sum(axis=0), rtol=1e-12)


def test_single_component_gets_all_mass():
    rng = np.random.default_rng(2)
    X = rng.random((4, 5))
    St, Sv = e_step_sums(X, rng.normal(size=(4, 1)), rng.normal(size=(1, 5)))
    np.testing.assert_allclose(St[:, 0], X.sum(axis=1), rtol=1e-12)
    np.testing.assert_allclose(Sv[0], X.sum(axis=0), rtol=1e-12)


def test_estep_matches_explicit_sources():
    rng = np.random.default_rng(3)
    X = rng.random((3, 4))
    Lt, Lv = rng.normal(size=(3, 2)), rng.normal(size=(2, 4))
    P = np.exp(Lt)[:, :, None] * np.exp(Lv)[None, :, :]
    S = X[:, None, :] * P / P.sum(axis=1, keepdims=True)
    St, Sv = e_step_sums(sp.csr_matrix(X), Lt, Lv)
    np.testing.assert_allclose(St, S.sum(axis=2), rtol=1e-12)
    np.testing.assert_allclose(Sv, S.sum(axis=0), rtol=1e-12)


def test_estep_extreme_logs_stay_finite():
    X = np.array([[1.0, 2.0], [3.0, 0.0]])
    St, Sv = e_step_sums(X, np.array([[-800.0, -805.0], [700.0, 690.0]]),
                         np.array([[-900.0, 0.0], [-910.0, 5.0]]))
    assert np.all(np.isfinite(St)) and np.all(np.isfinite(Sv))
    np.testing.assert_allclose(Sv.sum(axis=0), X.sum(axis=0), rtol=1e-12)


def test_estep_underflow_is_floored():
    # both products underflow to zero without the floor
    St, Sv = e_step_sums(np.array([[1.0]]), np.array([[0.0, -1000.0]]),
                         np.array([[-1000.0], [0.0]]))
    assert St.sum() == pytest.approx(1.0) and Sv.sum() == pytest.approx(1.0)


def test_estep_degenerate_state():
    with pytest.raises(DegenerateStateError):
        e_step_sums(np.array([[1.0]]), np.array([[np.nan]]), np.array([[0.0]]))


def test_rejects_negative_data():
    with pytest.raises(ValueError):
        e_step_sums(np.array([[-1.0]]), np.zeros((1, 1)), np.zeros((1, 1)))


# --- updates ----------------------------------------------------------------

def test_update_t_examples():
    h = VbnmfHyper(a_t=1, b_t=1)
    T = update_t(np.zeros((3, 2)), np.zeros((2, 4)), h)
    np.testing.assert_allclose(T.E, 1.0)
    T = update_t(np.array([[2.0]]), np.array([[1.0]]), h)
    assert T.E[0, 0] == pytest.approx(1.5)
    assert T.L[0, 0] == pytest.approx(digamma(3.0) + np.log(0.5))
    assert T.L[0, 0] == pytest.approx(0.2297, abs=1e-4)
    T2 = update_t(np.zeros((1, 1)), np.zeros((1, 1)), VbnmfHyper(b_t=2))
    assert T2.E[0, 0] == pytest.approx(2.0)


def test_update_v_examples():
    V = update_v_unsup(np.zeros((2, 3)), np.zeros((4, 2)), VbnmfHyper(a_v=1, b_v=1))
    np.testing.assert_allclose(V.E, 1.0)
    V = update_v_unsup(np.zeros((1, 1)), np.zeros((1, 1)), VbnmfHyper(a_v=0.5, b_v=3.0))
    assert V.E[0, 0] == pytest.approx(1.5)
    V = update_v_unsup(np.array([[3.0]]), np.array([[2.0]]), VbnmfHyper())
    assert V.E[0, 0] == pytest.approx(4 / 3)


def test_optimize_scale_examples():
    assert optimize_scale_hyper(np.full((2, 2), 3.0), 3.0) == pytest.approx(1.0)
    assert optimize_scale_hyper(np.array([[4.0, 8.0]]), 2.0) == pytest.approx(3.0)
    E = np.random.default_rng(0).random((3, 3)) + 0.1
    assert optimize_scale_hyper(5 * E, 0.7) == pytest.approx(5 * optimize_scale_hyper(E, 0.7))
    with pytest.raises(ValueError):
        optimize_scale_hyper(np.zeros((2, 2)), 1.0)


def test_optimized_scale_maximizes_prior_term():
    rng = np.random.default_rng(4)
    stats = random_stats(rng, (4, 3))
    a = 0.8
    from supvbnmf.numerics import gamma_expected_logpdf
    b = optimize_scale_hyper(stats, a)
    best = np.sum(gamma_expected_logpdf(stats.E, stats.L, a, b))
    for f in (0.9, 0.99, 1.01, 1.1):
        assert np.sum(gamma_expected_logpdf(stats.E, stats.L, a, b * f)) < best


# --- bound ------------------------------------------------------------------

def test_bound_matches_enumeration_oracle():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 4, size=(3, 3)).astype(float)
    X[0, 0] = 2.0
    T, V = random_stats(rng, (3, 2)), random_stats(rng, (2, 3))
    h = VbnmfHyper(a_t=0.7, b_t=1.3, a_v=1.5, b_v=0.6)
    want = (source_terms(X, T.L, V.L, T.E, V.E)
            + gamma_prior_and_entropy(T.shape, T.scale, h.a_t, h.b_t)
            + gamma_prior_and_entropy(V.shape, V.scale, h.a_v, h.b_v))
    assert compute_bound(X, VbnmfModel(T, V, h)) == pytest.approx(want, rel=1e-9)


def test_bound_of_zero_data_is_prior_only():
    rng = np.random.default_rng(6)
    T, V = random_stats(rng, (3, 2)), random_stats(rng, (2, 4))
    h = VbnmfHyper()
    got = compute_bound(np.zeros((3, 4)), VbnmfModel(T, V, h))
    want = (-np.sum(T.E @ V.E) + gamma_prior_and_entropy(T.shape, T.scale, 1, 1)
            + gamma_prior_and_entropy(V.shape, V.scale, 1, 1))
    assert np.isfinite(got)
    assert got == pytest.approx(want, rel=1e-9)


def test_bound_shape_check():
    rng = np.random.default_rng(7)
    m = VbnmfModel(random_stats(rng, (3, 2)), random_stats(rng, (2, 4)), VbnmfHyper())
    with pytest.raises(ValueError):
        compute_bound(np.ones((4, 3)), m)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.3, 1.0, 2.0]), st.booleans())
def test_bound_monotone(seed, a_v, optimize):
    rng = np.random.default_rng(seed)
    X = rng.gamma(0.5, 2.0, (12, 15)) * (rng.random((12, 15)) < 0.5)
    h = VbnmfHyper(a_v=a_v, optimize_b_t=optimize, optimize_b_v=optimize)
    m = fit(X, FitConfig(rank=3, max_iters=50, tol=0.0, seed=seed), h)
    assert len(m.bound_trace) == 50
    assert nonincreasing_steps(m.bound_trace).size == 0


def test_jensen_consistency():
    rng = np.random.default_rng(8)
    m = fit(rng.random((10, 12)), FitConfig(rank=3, max_iters=30, seed=1))
    for s in (m.T, m.V):
        assert np.all(s.E > 0)
        assert np.all(s.L <= np.log(s.E) + 1e-9)


# --- fit --------------------------------------------------------------------

def test_rank_one_recovery():
    rng = np.random.default_rng(9)
    X = np.outer(rng.uniform(1, 5, 20), rng.uniform(1, 5, 30))
    m = fit(X, FitConfig(rank=1, max_iters=500, tol=1e-10, seed=0))
    err = np.linalg.norm(X - m.T.E @ m.V.E) / np.linalg.norm(X)
    assert err < 0.05


def test_zero_iterations_returns_init():
    X = np.random.default_rng(10).random((5, 6))
    m = fit(X, FitConfig(rank=2, max_iters=0, seed=3))
    init = init_model(5, 6, 2, VbnmfHyper(), 3)
    np.testing.assert_array_equal(m.T.E, init.T.E)
    np.testing.assert_array_equal(m.V.E, init.V.E)
    assert m.bound_trace == [] and m.iterations_run == 0


def test_fit_bit_identical():
    X = np.random.default_rng(11).random((8, 9))
    a = fit(X, FitConfig(rank=3, max_iters=25, seed=4))
    b = fit(X, FitConfig(rank=3, max_iters=25, seed=4))
    assert a.bound_trace == b.bound_trace
    np.testing.assert_array_equal(a.V.E, b.V.E)


def test_fit_stops_at_tolerance():
    X = np.random.default_rng(12).random((8, 9))
    m = fit(X, FitConfig(rank=2, max_iters=5000, tol=1e-4, seed=0))
    assert m.iterations_run < 5000
    t = m.bound_trace
    assert abs(t[-1] - t[-2]) <= 1e-4 * abs(t[-2])


def test_shrinkage_with_small_shape():
    rng = np.random.default_rng(13)
    X = rng.gamma(1.0, 1.0, (5, 20))
    fixed = dict(optimize_b_t=False, optimize_b_v=False)
    cfg = FitConfig(rank=3, max_iters=200, tol=0.0, seed=2)
    sparse = fit(X, cfg, VbnmfHyper(a_v=0.5, **fixed))
    plain = fit(X, cfg, VbnmfHyper(a_v=1.0, **fixed))
    assert np.sum(sparse.V.E) < np.sum(plain.V.E)


# --- projection -------------------------------------------------------------

def test_projection_reproduces_training_coefficients():
    rng = np.random.default_rng(14)
    X = rng.gamma(1.0, 1.0, (15, 25))
    cfg = FitConfig(rank=3, max_iters=300, tol=0.0, seed=0)
    m = fit(X, cfg)
    V = project(X, m.T, m.hyper, cfg)
    assert np.linalg.norm(V.E - m.V.E) / np.linalg.norm(m.V.E) < 0.01


def test_projection_of_empty_document():
    rng = np.random.default_rng(15)
    X = rng.random((6, 7))
    m = fit(X, FitConfig(rank=2, max_iters=20, seed=0))
    X_test = np.zeros((6, 2))
    X_test[:, 0] = X[:, 0]
    V = project(X_test, m.T, m.hyper, FitConfig(rank=2, max_iters=20, seed=0))
    want = m.hyper.a_v / (1 / m.hyper.b_v + m.T.E.sum(axis=0))
    np.testing.assert_allclose(V.E[:, 1], want, rtol=1e-12)


def test_projection_duplicate_columns():
    rng = np.random.default_rng(16)
    X = rng.random((6, 7))
    m = fit(X, FitConfig(rank=2, max_iters=20, seed=0))
    X_test = np.column_stack([X[:, 3], X[:, 3]])
    V = project(X_test, m.T, m.hyper, FitConfig(rank=2, max_iters=500, tol=1e-13, seed=0))
    np.testing.assert_allclose(V.E[:, 0], V.E[:, 1], rtol=1e-6)


def test_projection_term_mismatch():
    rng = np.random.default_rng(17)
    m = fit(rng.random((6, 7)), FitConfig(rank=2, max_iters=5, seed=0))
    with pytest.raises(ValueError):
        project(np.ones((5, 2)), m.T, m.hyper, FitConfig(rank=2))
