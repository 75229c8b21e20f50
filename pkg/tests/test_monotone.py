import numpy as np
import pytest

from budgetbo import _fallback
from budgetbo._accel import BACKEND
from budgetbo.gp import GPModel, fit_hyperparams
from budgetbo.kernels import RBF, ExpDecay, Product
from budgetbo.monotone import (
    ConstraintSpec,
    MonotoneGP,
    build_virtual_locations,
    constrained_posterior,
    constraint_probability,
    monotone_constraint,
    sample_constraint,
    sample_truncated_mvn,
)
from oracles import learning_curve_dataset

GRID = np.linspace(0.0, 1.0, 50)


def rbf_model(Z, y, lt=0.3, noise=1e-4):
    return GPModel(Product(RBF((0.5,)), RBF((lt,)), 1.0), Z, y, noise=noise)


def along_t(x, ts=GRID):
    ts = np.asarray(ts, dtype=float)
    return np.column_stack([np.full(ts.size, x), ts])


def test_virtual_locations_ed():
    locs = build_virtual_locations([0.3, 0.7], ExpDecay())
    np.testing.assert_array_equal(locs, [[0.3, 0.7, 0.0], [0.3, 0.7, 1.0]])


def test_virtual_locations_rbf():
    np.testing.assert_allclose(build_virtual_locations([0.5], RBF((0.5,)))[:, -1], [0.0, 0.5, 1.0])
    assert build_virtual_locations([0.5], RBF((0.05,))).shape == (10, 2)
    assert build_virtual_locations([0.5], RBF((0.05,)), n_points=20).shape == (20, 2)


def test_constraint_spec_validation():
    with pytest.raises(ValueError):
        ConstraintSpec(np.zeros((1, 2)), 1.0, 0.0)
    with pytest.raises(ValueError):
        ConstraintSpec(np.zeros((1, 2)), 0.0, 1.0, virtual_noise=0.0)


def test_half_normal_mean_and_bounds():
    s = sample_truncated_mvn([0.0], [[1.0]], [0.0], [np.inf], 2000, seed=0)[:, 0]
    se = s.std(ddof=1) / np.sqrt(s.size)
    assert abs(s.mean() - np.sqrt(2 / np.pi)) < 3 * se
    assert s.min() >= 0.0


def test_box_bounds_respected_in_tails():
    cov = np.array([[1.0, 0.9], [0.9, 1.0]])
    lo, hi = np.array([3.0, -1.0]), np.array([4.0, 6.0])
    s = sample_truncated_mvn([-2.0, 0.0], cov, lo, hi, 500, seed=1)
    assert np.all(s >= lo) and np.all(s <= hi)
    s = sample_truncated_mvn([0.0], [[1.0]], [-np.inf], [-9.0], 200, seed=2)
    assert np.all(s <= -9.0) and np.all(np.isfinite(s))


def test_vacuous_samples_center():
    rng = np.random.default_rng(0)
    Z, y, _ = learning_curve_dataset(rng)
    m = rbf_model(Z, y)
    cs = ConstraintSpec(build_virtual_locations([0.4], m.kernel.kt), -np.inf, np.inf)
    from budgetbo.monotone import ConstraintState

    center = ConstraintState(m, cs, n_samples=None).c_center
    c = sample_constraint(m, cs, 2000, seed=0)
    se = c.std(axis=0, ddof=1) / np.sqrt(c.shape[0])
    # Gibbs draws are autocorrelated; allow for a modest effective-size loss
    assert np.all(np.abs(c.mean(axis=0) - center) < 3 * se * 2)


def test_vacuous_matches_unconstrained():
    rng = np.random.default_rng(1)
    Z, y, xs = learning_curve_dataset(rng)
    m = rbf_model(Z, y)
    Zs = along_t(xs[0, 0], np.linspace(0.05, 1, 10))
    cs = ConstraintSpec(build_virtual_locations(xs[0], m.kernel.kt), -np.inf, np.inf)
    p = constrained_posterior(m, cs, Zs, n_samples=2000, seed=0)
    ref = m.posterior(Zs)
    np.testing.assert_allclose(p.mean, ref.mean, rtol=1e-2)
    np.testing.assert_allclose(p.variance, ref.variance, rtol=1e-2, atol=1e-6)


def test_linear_data_constrained_mean_monotone():
    ts = np.linspace(0, 1, 6)
    Z = along_t(0.5, ts)
    m = rbf_model(Z, ts, lt=0.5)
    cs = monotone_constraint(build_virtual_locations([0.5], m.kernel.kt))
    p = constrained_posterior(m, cs, along_t(0.5), n_samples=2000, seed=0)
    assert np.diff(p.mean_std).min() >= -1e-3


def test_dip_is_removed():
    # a short dip in otherwise rising data; moderate noise lets the constraint win
    ts = np.linspace(0, 1, 9)
    y = ts.copy()
    y[5] -= 0.3
    m = rbf_model(along_t(0.5, ts), y, lt=0.2, noise=0.05)
    unc = m.predict(along_t(0.5))[0]
    cs = monotone_constraint(build_virtual_locations([0.5], m.kernel.kt))
    con = constrained_posterior(m, cs, along_t(0.5), n_samples=2000, seed=0).mean_std
    assert np.diff(unc).min() < -1e-3
    assert np.diff(con).min() >= -1e-3


def test_fitted_learning_curves_monotone_at_dense_virtual_grid():
    for seed in range(3):
        rng = np.random.default_rng(seed)
        Z, y, xs = learning_curve_dataset(rng)
        m = fit_hyperparams(rbf_model(Z, y, noise=1e-3), seed=seed)
        for x in xs:
            cs = monotone_constraint(build_virtual_locations(x, m.kernel.kt, n_points=10))
            p = constrained_posterior(m, cs, along_t(x[0]), n_samples=2000, seed=seed)
            assert np.diff(p.mean_std).min() >= -1e-3


def test_constrained_variance_nonnegative_and_symmetric_b1():
    rng = np.random.default_rng(4)
    Z, y, xs = learning_curve_dataset(rng)
    m = rbf_model(Z, y)
    cs = monotone_constraint(build_virtual_locations(xs[1], m.kernel.kt))
    p = constrained_posterior(m, cs, along_t(xs[1, 0]), n_samples=500, seed=0, full_cov=True)
    assert np.all(p.variance >= 0)
    np.testing.assert_allclose(p.B1, p.B1.T)
    np.linalg.cholesky(p.B1 + 1e-8 * np.eye(p.B1.shape[0]))


def test_constraint_probability_examples():
    m = GPModel(Product(RBF((0.5,)), RBF((0.5,)), 1.0))
    loc = [[0.3, 0.5]]
    assert constraint_probability(m, ConstraintSpec(loc, -np.inf, np.inf)) == 1.0
    # with no data the derivative at one point is N(0, 1 / l^2): half the mass is >= 0
    assert constraint_probability(m, monotone_constraint(loc), n_samples=2000) == pytest.approx(0.5, abs=0.03)
    ts = np.linspace(0, 1, 8)
    rising = GPModel(m.kernel, along_t(0.3, ts), 3 * ts, noise=1e-4)
    cs = monotone_constraint(build_virtual_locations([0.3], m.kernel.kt))
    assert constraint_probability(rising, cs) >= 0.9


def test_deterministic_given_seed():
    rng = np.random.default_rng(5)
    Z, y, xs = learning_curve_dataset(rng)
    m = rbf_model(Z, y)
    cs = monotone_constraint(build_virtual_locations(xs[0], m.kernel.kt))
    a = constrained_posterior(m, cs, along_t(xs[0, 0]), seed=3)
    b = constrained_posterior(m, cs, along_t(xs[0, 0]), seed=3)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.variance, b.variance)


@pytest.mark.skipif(BACKEND != "cython", reason="compiled core not built")
def test_compiled_sampler_matches_fallback():
    from budgetbo import _core

    rng = np.random.default_rng(6)
    k = 6
    A = rng.standard_normal((k, k))
    prec = A @ A.T + k * np.eye(k)
    mean = rng.standard_normal(k)
    lo = np.where(rng.random(k) < 0.5, 0.0, -np.inf)
    hi = np.full(k, np.inf)
    x0 = np.clip(mean, lo, hi)
    U = rng.random((300, k))
    a = _core.gibbs_tmvn(mean, prec, lo, hi, x0, U, 100, 5)
    b = _fallback.gibbs_tmvn(mean, prec, lo, hi, x0, U, 100, 5)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


class TestMonotoneGP:
    def setup_method(self):
        rng = np.random.default_rng(7)
        Z, y, self.xs = learning_curve_dataset(rng)
        gp = GPModel(Product(RBF((0.5,)), ExpDecay(1.0, 0.5, 0.1), 1.0), Z, y, noise=1e-4)
        self.model = MonotoneGP(gp, n_samples=200, seed=0)

    def test_query_order_does_not_matter(self):
        Zs = np.vstack([along_t(self.xs[0, 0], [0.2, 0.9]), along_t(self.xs[1, 0], [0.5])])
        mu, cov = self.model.predict(Zs, full_cov=True)
        perm = [2, 0, 1]
        mu2, cov2 = MonotoneGP(self.model.gp, seed=0).predict(Zs[perm], full_cov=True)
        np.testing.assert_allclose(mu2, mu[perm], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(cov2, cov[np.ix_(perm, perm)], rtol=1e-10, atol=1e-12)

    def test_curve_in_target_units(self):
        mean, var = self.model.curve(self.xs[0], [0.5])
        post = self.model.posterior(along_t(self.xs[0, 0], [0.5]))
        assert mean[0] == post.mean[0] and var[0] == post.variance[0]
        mu, v = self.model.predict(along_t(self.xs[0, 0], [0.5]))
        assert mean[0] == pytest.approx(mu[0] * self.model.scale + self.model.offset)
