import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgetbo.exceptions import IllConditionedError
from budgetbo.gp import GPModel, fit_hyperparams, log_marginal_likelihood, posterior, robust_cholesky
from budgetbo.kernels import RBF, ExpDecay, Product
from oracles import dense_lml, dense_posterior, with_jitter


def kern(lx=0.3, lt=0.4, scale=1.0):
    return Product(RBF((lx,)), RBF((lt,)), scale)


def test_prior_without_data():
    m = GPModel(kern(scale=2.0))
    post = posterior(m, [[0.3, 0.5], [0.9, 0.1]])
    np.testing.assert_allclose(post.mean, 0.0)
    np.testing.assert_allclose(post.variance, 2.0)


def test_interpolates_noiseless_training_points():
    rng = np.random.default_rng(0)
    Z = rng.random((8, 2))
    y = np.sin(5 * Z[:, 0]) + Z[:, 1]
    m = GPModel(kern(), Z, y, noise=0.0)
    post = posterior(m, Z)
    np.testing.assert_allclose(post.mean, y, atol=1e-6)
    assert np.all(post.variance <= 1e-6)


def test_posterior_matches_dense_oracle():
    rng = np.random.default_rng(1)
    k = Product(RBF((0.4, 0.2)), ExpDecay(1.2, 0.5, 0.1), 1.3)
    Z, Zs = rng.random((10, 3)), rng.random((4, 3))
    y = rng.standard_normal(10)
    m = GPModel(k, Z, y, noise=0.05, standardize=None)
    mu, var = dense_posterior(k(Zs, Zs), k(Zs, Z), with_jitter(k(Z, Z) + 0.05 * np.eye(10)), y)
    post = posterior(m, Zs)
    np.testing.assert_allclose(post.mean, mu, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(post.variance, var, rtol=1e-6, atol=1e-10)


def test_standardization_round_trip():
    rng = np.random.default_rng(2)
    Z = rng.random((6, 2))
    y = 100 + 7 * rng.standard_normal(6)
    post = posterior(GPModel(kern(), Z, y, noise=0.0), Z)
    np.testing.assert_allclose(post.mean, y, atol=1e-5)


def test_lml_single_observation():
    m = GPModel(kern(), [[0.2, 0.3]], [1.7], noise=1.0, standardize=None, mean=1.7)
    # the 1e-8 relative jitter moves the value by about 5e-9
    assert log_marginal_likelihood(m) == pytest.approx(-0.5 * np.log(2 * np.pi * 2), rel=1e-8)


def test_lml_zero_residual_has_no_data_fit_term():
    rng = np.random.default_rng(3)
    Z = rng.random((4, 2))
    m = GPModel(kern(), Z, np.full(4, 0.5), noise=0.1, standardize=None, mean=0.5)
    K = with_jitter(kern()(Z, Z) + 0.1 * np.eye(4))
    expect = -0.5 * np.linalg.slogdet(K)[1] - 2 * np.log(2 * np.pi)
    assert log_marginal_likelihood(m) == pytest.approx(expect, rel=1e-12)


def test_lml_matches_dense_determinant():
    rng = np.random.default_rng(4)
    k = kern(0.5, 0.3, 1.7)
    Z = rng.random((5, 2))
    y = rng.standard_normal(5)
    m = GPModel(k, Z, y, noise=0.01, standardize=None)
    oracle = dense_lml(with_jitter(k(Z, Z) + 0.01 * np.eye(5)), y)
    assert abs(log_marginal_likelihood(m) - oracle) / abs(oracle) < 1e-8


def test_lml_gradient_matches_finite_differences():
    from budgetbo.gp import _neg_lml

    rng = np.random.default_rng(5)
    Z = rng.random((12, 3))
    m = GPModel(Product(RBF((0.4, 0.6)), ExpDecay(1.1, 0.8, 0.2), 1.2), Z, rng.standard_normal(12), noise=0.03)
    theta = np.log(np.append(m.kernel.params, m.noise))
    _, g = _neg_lml(theta, m)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = 1e-6
        fd = (_neg_lml(theta + e, m)[0] - _neg_lml(theta - e, m)[0]) / 2e-6
        assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_fit_recovers_lengthscale():
    rng = np.random.default_rng(6)
    true = kern(0.3, 0.3, 1.0)
    Z = rng.random((40, 2))
    y = rng.multivariate_normal(np.zeros(40), true(Z, Z) + 1e-4 * np.eye(40))
    m = fit_hyperparams(GPModel(kern(1.0, 1.0), Z, y, noise=0.1), seed=0)
    assert 0.15 <= m.kernel.kx.lengthscales[0] <= 0.6


def test_fit_never_worse():
    rng = np.random.default_rng(7)
    Z = rng.random((15, 2))
    y = np.cos(4 * Z[:, 0]) * Z[:, 1]
    m0 = fit_hyperparams(GPModel(kern(), Z, y), seed=1)
    m1 = fit_hyperparams(m0, n_restarts=2, seed=2)
    assert log_marginal_likelihood(m1) >= log_marginal_likelihood(m0)


def test_fit_deterministic():
    rng = np.random.default_rng(8)
    Z = rng.random((12, 2))
    y = Z.sum(1) ** 2
    a = fit_hyperparams(GPModel(kern(), Z, y), seed=3)
    b = fit_hyperparams(GPModel(kern(), Z, y), seed=3)
    np.testing.assert_array_equal(a.kernel.params, b.kernel.params)
    assert a.noise == b.noise


def test_fit_constant_targets():
    rng = np.random.default_rng(9)
    Z = rng.random((10, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = fit_hyperparams(GPModel(kern(), Z, np.full(10, 3.25)), seed=0)
    post = posterior(m, rng.random((20, 2)))
    np.testing.assert_allclose(post.mean, 3.25, atol=1e-3)


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparams(GPModel(kern(), [[0.1, 0.1]], [1.0]))


def test_jitter_ladder_escalates_and_fails():
    # slightly indefinite: the first rung is too small, the second suffices
    L, jitter = robust_cholesky(np.diag([1.0, -6e-9]))
    assert jitter == 1e-6
    with pytest.raises(IllConditionedError):
        robust_cholesky(np.diag([1.0, -1.0]))


def test_rejects_mismatched_data():
    with pytest.raises(ValueError):
        GPModel(kern(), np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        GPModel(kern(), [[np.nan, 0.0]], [1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(1e-6, 0.5), st.integers(0, 2**32 - 1))
def test_variance_bounded_by_prior_and_shrinks(n, noise, seed):
    rng = np.random.default_rng(seed)
    k = Product(RBF((rng.uniform(0.1, 1), rng.uniform(0.1, 1))), ExpDecay(1.0, 0.5, 0.1), rng.uniform(0.5, 2))
    Z = rng.random((n + 1, 3))
    y = rng.standard_normal(n + 1)
    Zs = rng.random((6, 3))
    prior = k.diag(Zs)
    small = GPModel(k, Z[:n], y[:n], noise=noise, standardize=None)
    big = GPModel(k, Z, y, noise=noise, standardize=None)
    v_small = small.predict(Zs)[1]
    v_big = big.predict(Zs)[1]
    assert np.all(v_small <= prior + 1e-8)
    assert np.all(v_big <= v_small + 1e-8)
