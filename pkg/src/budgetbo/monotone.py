"""GP posterior conditioned on derivative bounds along the epoch axis.

The epoch derivative of the latent function is observed (with a tiny
virtual noise) at a finite set of virtual locations and constrained to a box
``lower <= df/dt <= upper``.  The constrained derivative values ``C`` follow a
truncated multivariate normal; given ``C`` the prediction is Gaussian and
linear in ``C``.  We sample ``C`` with a Gibbs sampler and report the
Gaussian moment match of the resulting mixture.

All internal computations are in the standardized target units of the
wrapped :class:`~budgetbo.gp.GPModel`; bounds are given in target units per
normalized epoch and rescaled on the way in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import _accel
from .exceptions import IllConditionedError, UnsupportedOperationError
from .gp import robust_cholesky
from .kernels import RBF, ExpDecay

__all__ = [
    "ConstraintSpec",
    "ConstrainedPosterior",
    "ConstraintState",
    "build_virtual_locations",
    "monotone_constraint",
    "sample_truncated_mvn",
    "sample_constraint",
    "condition",
    "constrained_posterior",
    "constraint_probability",
    "MonotoneGP",
]

VIRTUAL_NOISE = 1e-6
MAX_VIRTUAL = 10
GIBBS_BURN_IN = 100
GIBBS_THIN = 5


@dataclass(frozen=True)
class ConstraintSpec:
    """Virtual derivative observations ``lower <= df/dt (locations) <= upper``."""

    locations: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    virtual_noise: float = VIRTUAL_NOISE

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float, ndmin=2)
        s = loc.shape[0]
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (s,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (s,)).copy()
        if s == 0:
            raise ValueError("constraint needs at least one virtual location")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if not self.virtual_noise > 0:
            raise ValueError("virtual noise must be positive")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def vacuous(self):
        return bool(np.all(np.isneginf(self.lower)) and np.all(np.isposinf(self.upper)))


def build_virtual_locations(x, tkernel, t_range=(0.0, 1.0), n_points=None):
    """Virtual locations at configuration ``x`` spread linearly along the epoch axis.

    Two endpoints suffice for the exponential-decay kernel; for an RBF the
    spacing must stay below the lengthscale, so ``ceil(range / l) + 1``
    points are used, capped at ``MAX_VIRTUAL``.  ``n_points`` overrides the
    rule; a denser grid tightens monotonicity between the points.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t0, t1 = float(t_range[0]), float(t_range[1])
    if n_points is not None:
        n = int(n_points)
        if n < 1:
            raise ValueError("need at least one virtual location")
    elif isinstance(tkernel, ExpDecay):
        n = 2
    elif isinstance(tkernel, RBF):
        l = tkernel.lengthscales[0]
        n = min(math.ceil((t1 - t0) / l - 1e-9) + 1, MAX_VIRTUAL)
    else:
        raise UnsupportedOperationError(f"no virtual-location rule for {type(tkernel).__name__}")
    n = max(n, 2) if t1 > t0 else 1
    ts = np.linspace(t0, t1, n)
    return np.column_stack([np.tile(x, (n, 1)), ts])


def monotone_constraint(locations, virtual_noise=VIRTUAL_NOISE):
    """Non-decreasing-in-epoch constraint at the given locations."""
    locations = np.array(locations, dtype=float, ndmin=2)
    return ConstraintSpec(locations, 0.0, np.inf, virtual_noise)


def sample_truncated_mvn(mean, cov, lower, upper, n, seed=0, burn_in=GIBBS_BURN_IN, thin=GIBBS_THIN):
    """Draw ``n`` samples of ``N(mean, cov)`` restricted to ``[lower, upper]``.

    Coordinate-wise Gibbs sampling with inverse-CDF conditional draws.  Every
    sample satisfies the bounds exactly.
    """
    mean = np.ascontiguousarray(mean, dtype=float).ravel()
    k = mean.shape[0]
    cov = np.asarray(cov, dtype=float).reshape(k, k)
    lower = np.array(np.broadcast_to(lower, (k,)), dtype=float)
    upper = np.array(np.broadcast_to(upper, (k,)), dtype=float)
    if n < 1:
        raise ValueError("need at least one sample")
    L, _ = robust_cholesky(0.5 * (cov + cov.T))
    prec = np.ascontiguousarray(cho_solve((L, True), np.eye(k)))
    prec = 0.5 * (prec + prec.T)
    x0 = np.clip(mean, lower, upper)
    rng = np.random.default_rng(seed)
    uniforms = rng.random((burn_in + n * thin, k))
    samples = _accel.gibbs_tmvn(mean, prec, lower, upper, x0, uniforms, burn_in, thin)
    return np.clip(samples, lower, upper)


class ConstraintState:
    """Everything about a constraint that does not depend on the query points.

    Holds the matrices ``A1`` and ``B1`` and the sampled constrained derivative
    values; :meth:`predict` combines them with any batch of queries.
    """

    def __init__(self, model, cs, n_samples=200, seed=0):
        self.model = model
        self.cs = cs
        kern = model.kernel
        Zv = cs.locations
        s = Zv.shape[0]
        # K_{Z,Zv} L^T: derivative w.r.t. the epoch of the virtual point
        if model.n > 0:
            self.KZv = kern.grad_t(model.Z, Zv)
            self.A1 = model.solve(self.KZv).T
            self.resid = model.ys - model.mean
            B1 = kern.hess_tt(Zv, Zv) + cs.virtual_noise * np.eye(s) - self.A1 @ self.KZv
            self.c_center = self.A1 @ self.resid
        else:
            self.KZv = np.zeros((0, s))
            self.A1 = np.zeros((s, 0))
            self.resid = np.zeros(0)
            B1 = kern.hess_tt(Zv, Zv) + cs.virtual_noise * np.eye(s)
            self.c_center = np.zeros(s)
        self.B1 = 0.5 * (B1 + B1.T)
        try:
            self.B1_chol, _ = robust_cholesky(self.B1)
        except IllConditionedError as exc:
            raise IllConditionedError(f"constraint covariance not PSD: {exc}") from exc
        self.lower = cs.lower / model.scale
        self.upper = cs.upper / model.scale
        if n_samples is None or cs.vacuous:
            # no truncation: the Gaussian moments are exact
            self.samples = None
            self.c_mean = self.c_center
            self.c_cov = self.B1
        else:
            self.samples = sample_truncated_mvn(
                self.c_center, self.B1, self.lower, self.upper, n_samples, seed
            )
            self.c_mean = self.samples.mean(axis=0)
            if self.samples.shape[0] > 1:
                self.c_cov = np.atleast_2d(np.cov(self.samples, rowvar=False))
            else:
                self.c_cov = np.zeros((s, s))

    def predict(self, Zs, full_cov=False):
        """Constrained posterior at ``Zs``; see :class:`ConstrainedPosterior`."""
        model = self.model
        kern = model.kernel
        Zs = np.array(Zs, dtype=float, ndmin=2)
        Zv = self.cs.locations
        Kss = kern(Zs, Zs) if full_cov else None
        Ksv = kern.grad_t(Zs, Zv)
        if model.n > 0:
            Ks = kern(Zs, model.Z)
            A2 = model.solve(Ks.T).T
            if full_cov:
                B2 = Kss - A2 @ Ks.T
            else:
                V = solve_triangular(model.chol, Ks.T, lower=True)
                B2 = kern.diag(Zs) - np.einsum("ij,ij->j", V, V)
            B3 = Ksv - A2 @ self.KZv
        else:
            A2 = np.zeros((Zs.shape[0], 0))
            B2 = Kss if full_cov else kern.diag(Zs)
            B3 = Ksv
        A = cho_solve((self.B1_chol, True), B3.T).T
        B = A2 - A @ self.A1
        mean_std = model.mean + A @ self.c_mean + B @ self.resid
        AC = A @ self.c_cov
        if full_cov:
            Sigma = B2 - A @ B3.T
            cov = Sigma + AC @ A.T
            cov = 0.5 * (cov + cov.T)
            var = np.maximum(np.diag(cov), 0.0)
        else:
            Sigma = B2 - np.einsum("ij,ij->i", A, B3)
            var = np.maximum(Sigma + np.einsum("ij,ij->i", AC, A), 0.0)
            cov = None
        sc, off = model.scale, model.offset
        return ConstrainedPosterior(
            mean=mean_std * sc + off,
            variance=var * sc**2,
            mean_std=mean_std,
            cov_std=cov,
            c_mean=self.c_mean,
            c_cov=self.c_cov,
            A=A, B=B, A1=self.A1, A2=A2, B1=self.B1, B2=B2, B3=B3, Sigma=Sigma,
        )


@dataclass
class ConstrainedPosterior:
    """Constrained predictive moments plus the intermediate matrices.

    ``mean`` and ``variance`` are in target units; ``mean_std`` and
    ``cov_std`` (full covariance, only when requested) are standardized.
    ``Sigma`` is the conditional covariance given ``C`` (its diagonal when
    ``cov_std`` is None).
    """

    mean: np.ndarray
    variance: np.ndarray
    mean_std: np.ndarray
    cov_std: np.ndarray | None
    c_mean: np.ndarray
    c_cov: np.ndarray
    A: np.ndarray
    B: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray
    Sigma: np.ndarray


def condition(model, cs, n_samples=200, seed=0):
    return ConstraintState(model, cs, n_samples, seed)


def sample_constraint(model, cs, n, seed=0):
    """Samples of the constrained derivative values, shape ``(n, s)``, standardized units."""
    st = ConstraintState(model, cs, n_samples=None)
    return sample_truncated_mvn(st.c_center, st.B1, st.lower, st.upper, n, seed)


def constrained_posterior(model, cs, zs, n_samples=200, seed=0, full_cov=False):
    return ConstraintState(model, cs, n_samples, seed).predict(zs, full_cov=full_cov)


def constraint_probability(model, cs, n_samples=2000, seed=0):
    """Monte-Carlo estimate of P(lower <= C <= upper) for the untruncated ``C``."""
    if cs.vacuous:
        return 1.0
    state = ConstraintState(model, cs, n_samples=None)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, state.c_center.shape[0]))
    draws = state.c_center + z @ state.B1_chol.T
    inside = np.all((draws >= state.lower) & (draws <= state.upper), axis=1)
    return float(inside.mean())


class MonotoneGP:
    """Objective model: a GP made monotone in the epoch at every queried config.

    Each call to :meth:`predict` places virtual locations at the distinct
    configurations of the query batch (sorted, so the result does not depend
    on query order) and conditions on non-negative epoch derivatives there.
    Constraint states are cached per configuration set; the Gibbs seed is
    fixed so repeated calls are reproducible and share random numbers.
    """

    def __init__(self, gp, t_range=(0.0, 1.0), n_samples=200, seed=0, cache_size=256):
        self.gp = gp
        self.t_range = (float(t_range[0]), float(t_range[1]))
        self.n_samples = n_samples
        self.seed = int(seed)
        self.cache_size = cache_size
        self._cache = {}

    @property
    def scale(self):
        return self.gp.scale

    @property
    def offset(self):
        return self.gp.offset

    def to_std(self, y):
        return (np.asarray(y, dtype=float) - self.gp.offset) / self.gp.scale

    def constraint_for(self, configs):
        configs = np.unique(np.array(configs, dtype=float, ndmin=2), axis=0)
        kt = self.gp.kernel.kt
        locs = np.vstack([build_virtual_locations(x, kt, self.t_range) for x in configs])
        return monotone_constraint(locs)

    def state(self, configs):
        configs = np.unique(np.array(configs, dtype=float, ndmin=2), axis=0)
        key = configs.tobytes()
        st = self._cache.get(key)
        if st is None:
            st = ConstraintState(self.gp, self.constraint_for(configs), self.n_samples, self.seed)
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = st
        return st

    def predict(self, Zs, full_cov=False):
        """Constrained mean and (co)variance in standardized units."""
        Zs = np.array(Zs, dtype=float, ndmin=2)
        post = self.state(Zs[:, :-1]).predict(Zs, full_cov=full_cov)
        if full_cov:
            return post.mean_std, post.cov_std
        return post.mean_std, post.variance / self.gp.scale**2

    def posterior(self, Zs):
        from .gp import PosteriorSummary

        Zs = np.array(Zs, dtype=float, ndmin=2)
        post = self.state(Zs[:, :-1]).predict(Zs)
        return PosteriorSummary(post.mean, post.variance)

    def curve(self, x, ts):
        """Constrained mean and variance (target units) along normalized epochs ``ts`` at ``x``."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        Zs = np.column_stack([np.tile(np.asarray(x, dtype=float), (ts.size, 1)), ts])
        post = self.posterior(Zs)
        return post.mean, post.variance
