"""Exact Gaussian-process regression with a cached Cholesky factor."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .exceptions import IllConditionedError

__all__ = [
    "PosteriorSummary",
    "GPModel",
    "robust_cholesky",
    "posterior",
    "log_marginal_likelihood",
    "fit_hyperparams",
]

JITTER_LADDER = (1e-8, 1e-6, 1e-4)
NOISE_FLOOR = 1e-6
_LOG2PI = np.log(2.0 * np.pi)


def robust_cholesky(K):
    """Lower Cholesky factor of ``K + jitter * I``, escalating jitter on failure.

    Returns
    -------
    L : ndarray
    jitter : float
        The jitter that succeeded.
    """
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0)), JITTER_LADDER[0]
    if not np.all(np.isfinite(K)):
        raise IllConditionedError("covariance contains non-finite entries")
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(K + jitter * scale * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedError(f"Cholesky failed with jitter up to {JITTER_LADDER[-1]}")


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean and variance in target units."""

    mean: np.ndarray
    variance: np.ndarray


class GPModel:
    """GP with constant mean on standardized targets.

    Parameters
    ----------
    kernel
        A kernel from :mod:`budgetbo.kernels` (usually a ``Product``).
    Z, y
        Training inputs ``(n, d + 1)`` and targets ``(n,)``.
    noise : float
        Observation-noise variance in standardized units.
    standardize : {"standard", "max", None}
        ``"standard"`` maps targets to zero mean and unit variance,
        ``"max"`` only divides by the largest absolute target (used for
        costs, which stay on a ratio scale), ``None`` leaves them untouched.
    mean : float
        Constant prior mean in standardized units.
    """

    def __init__(self, kernel, Z=None, y=None, noise=NOISE_FLOOR, standardize="standard", mean=0.0):
        self.kernel = kernel
        self.noise = float(noise)
        self.standardize = standardize
        self.mean = float(mean)
        if Z is None:
            Z = np.zeros((0, getattr(kernel, "dim", 0) + 1))
            y = np.zeros(0)
        self.Z = np.array(Z, dtype=float, ndmin=2)
        self.y = np.array(y, dtype=float).ravel()
        if self.Z.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.Z.shape[0]} inputs but {self.y.shape[0]} targets")
        if not (np.all(np.isfinite(self.Z)) and np.all(np.isfinite(self.y))):
            raise ValueError("training data must be finite")
        if self.noise < 0:
            raise ValueError("noise variance must be nonnegative")
        self.offset, self.scale = self._standardization()
        self.ys = (self.y - self.offset) / self.scale
        self._factorize()

    def _standardization(self):
        n = self.y.shape[0]
        if self.standardize == "standard" and n > 0:
            offset = float(self.y.mean())
            sd = float(self.y.std()) if n > 1 else 0.0
            return offset, (sd if sd > 1e-12 else 1.0)
        if self.standardize == "max" and n > 0:
            m = float(np.max(np.abs(self.y)))
            return 0.0, (m if m > 0 else 1.0)
        return 0.0, 1.0

    def _factorize(self):
        n = self.n
        if n == 0:
            self.chol = np.zeros((0, 0))
            self.alpha = np.zeros(0)
            self.jitter = JITTER_LADDER[0]
            return
        K = self.kernel(self.Z, self.Z) + self.noise * np.eye(n)
        self.chol, self.jitter = robust_cholesky(K)
        self.alpha = cho_solve((self.chol, True), self.ys - self.mean)

    @property
    def n(self):
        return self.y.shape[0]

    def with_data(self, Z, y):
        return GPModel(self.kernel, Z, y, self.noise, self.standardize, self.mean)

    def with_params(self, kernel, noise):
        return GPModel(kernel, self.Z, self.y, noise, self.standardize, self.mean)

    def solve(self, B):
        """``(K + noise I)^{-1} B`` via the cached factor."""
        return cho_solve((self.chol, True), B)

    def predict(self, Zs, full_cov=False):
        """Posterior mean and (co)variance in standardized units."""
        Zs = np.array(Zs, dtype=float, ndmin=2)
        if self.n == 0:
            mu = np.full(Zs.shape[0], self.mean)
            if full_cov:
                return mu, self.kernel(Zs, Zs)
            return mu, self.kernel.diag(Zs).copy()
        Ks = self.kernel(Zs, self.Z)
        mu = self.mean + Ks @ self.alpha
        V = solve_triangular(self.chol, Ks.T, lower=True)
        if full_cov:
            return mu, self.kernel(Zs, Zs) - V.T @ V
        var = self.kernel.diag(Zs) - np.einsum("ij,ij->j", V, V)
        return mu, np.maximum(var, 0.0)

    def posterior(self, Zs):
        """Posterior summary in target units."""
        mu, var = self.predict(Zs)
        return PosteriorSummary(mu * self.scale + self.offset, var * self.scale**2)

    def log_marginal_likelihood(self):
        if self.n == 0:
            raise ValueError("log marginal likelihood needs at least one observation")
        r = self.ys - self.mean
        return float(
            -0.5 * r @ self.alpha
            - np.log(np.diag(self.chol)).sum()
            - 0.5 * self.n * _LOG2PI
        )


def posterior(model, zs):
    """Posterior of ``model`` at one or more queries, in target units."""
    return model.posterior(zs)


def log_marginal_likelihood(model):
    return model.log_marginal_likelihood()


def default_bounds(kernel):
    """Natural-unit box for every kernel parameter plus the noise variance."""
    n = len(kernel.params)
    lo = np.full(n + 1, 1e-3)
    hi = np.full(n + 1, 1e3)
    lo[-1], hi[-1] = NOISE_FLOOR, 10.0
    return lo, hi


def _neg_lml(log_theta, model):
    """Negative log marginal likelihood and its gradient in log-parameters."""
    theta = np.exp(log_theta)
    try:
        m = model.with_params(model.kernel.with_params(theta[:-1]), theta[-1])
        val = -m.log_marginal_likelihood()
    except (IllConditionedError, ValueError, FloatingPointError):
        return 1e25, np.zeros_like(log_theta)
    if not np.isfinite(val):
        return 1e25, np.zeros_like(log_theta)
    # d lml = 0.5 tr((a a^T - K^-1) dK)
    W = np.outer(m.alpha, m.alpha) - cho_solve((m.chol, True), np.eye(m.n))
    grads = m.kernel.log_param_grads(m.Z, m.Z)
    g = np.array([0.5 * np.einsum("ij,ji->", W, dK) for dK in grads] + [0.5 * m.noise * np.trace(W)])
    return val, -g


def fit_hyperparams(model, bounds=None, n_restarts=5, seed=0, maxiter=200):
    """Maximize the log marginal likelihood over log-parameters.

    Multi-start L-BFGS-B (analytic gradients) from the incoming
    parameters plus ``n_restarts`` random log-uniform starts.  Never returns a
    model with a lower likelihood than the incoming one.
    """
    if model.n < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    lo, hi = default_bounds(model.kernel) if bounds is None else map(np.asarray, bounds)
    log_lo, log_hi = np.log(lo), np.log(hi)
    theta0 = np.append(model.kernel.params, model.noise)
    theta0 = np.where(theta0 <= 0, lo, theta0)
    rng = np.random.default_rng(seed)
    starts = [np.clip(np.log(theta0), log_lo, log_hi)]
    start_lo = np.maximum(log_lo, np.log(1e-2))
    start_hi = np.minimum(log_hi, np.log(1e1))
    for _ in range(n_restarts):
        starts.append(rng.uniform(start_lo, start_hi))

    try:
        best_val = -model.log_marginal_likelihood()
    except IllConditionedError:
        best_val = np.inf
    best = None
    for x0 in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                _neg_lml, x0, args=(model,), method="L-BFGS-B", jac=True,
                bounds=list(zip(log_lo, log_hi)), options={"maxiter": maxiter},
            )
        if np.isfinite(res.fun) and res.fun < 1e25 and res.fun < best_val:
            best_val, best = float(res.fun), res.x
    if best is None:
        if not np.isfinite(best_val):
            warnings.warn("hyperparameter fitting failed; keeping incoming parameters")
        return model
    theta = np.exp(best)
    return model.with_params(model.kernel.with_params(theta[:-1]), theta[-1])
