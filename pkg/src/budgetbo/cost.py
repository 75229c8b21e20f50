"""Training-cost model and restart-aware charging.

Cumulative cost is modeled by a GP with an RBF kernel over configurations
times a linear kernel (with bias, for fixed overhead) over the normalized
epoch.  Targets are only divided by their maximum so they stay on a ratio
scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gp import GPModel, fit_hyperparams
from .kernels import RBF, Linear, Product

__all__ = ["CostRecord", "RestartState", "CostModel", "predict_cost", "incremental_cost"]

COST_FLOOR = 1e-9
SAME_CONFIG_TOL = 1e-9


@dataclass(frozen=True)
class CostRecord:
    x: tuple
    epoch: int
    cost: float


@dataclass
class RestartState:
    """Largest epoch (and the actual cost) already paid for each configuration.

    Configurations are matched by exact coordinate equality within 1e-9.
    """

    configs: list = field(default_factory=list)
    t_paid: list = field(default_factory=list)
    cost_paid: list = field(default_factory=list)

    def _find(self, x):
        x = np.asarray(x, dtype=float)
        for i, c in enumerate(self.configs):
            if np.all(np.abs(c - x) <= SAME_CONFIG_TOL):
                return i
        return None

    def paid(self, x):
        """``(t_paid, cumulative cost paid)``; ``(0, 0.0)`` for unseen configs."""
        i = self._find(x)
        if i is None:
            return 0, 0.0
        return self.t_paid[i], self.cost_paid[i]

    def update(self, x, epoch, cumulative_cost):
        epoch = int(epoch)
        if epoch < 0:
            raise ValueError("epoch must be nonnegative")
        i = self._find(x)
        if i is None:
            self.configs.append(np.array(x, dtype=float))
            self.t_paid.append(epoch)
            self.cost_paid.append(float(cumulative_cost))
        elif epoch > self.t_paid[i]:
            self.t_paid[i] = epoch
            self.cost_paid[i] = float(cumulative_cost)

    def stored(self):
        """Array of known configurations and their paid epochs."""
        if not self.configs:
            return np.zeros((0, 0)), np.zeros(0, dtype=int)
        return np.array(self.configs), np.array(self.t_paid, dtype=int)


def default_cost_kernel(dim):
    return Product(RBF((0.5,) * dim), Linear(0.1, 1.0), 1.0)


class CostModel:
    """GP over cumulative cost indexed by ``(x, epoch)``.

    Parameters
    ----------
    dim : int
        Configuration dimension.
    t_max : int
        Epoch normalizer; queries take raw epochs.
    gp : GPModel, optional
        Fitted GP over normalized inputs; built empty when omitted.
    """

    def __init__(self, dim, t_max, gp=None):
        self.dim = int(dim)
        self.t_max = float(t_max)
        if gp is None:
            gp = GPModel(default_cost_kernel(dim), noise=1e-6, standardize="max")
        self.gp = gp

    def inputs(self, x, epochs):
        epochs = np.atleast_1d(np.asarray(epochs, dtype=float))
        x = np.asarray(x, dtype=float)
        return np.column_stack([np.tile(x, (epochs.size, 1)), epochs / self.t_max])

    def fit(self, X, epochs, costs, optimize=True, seed=0, n_restarts=5):
        """New model on records ``(X[i], epochs[i], costs[i])``."""
        X = np.array(X, dtype=float, ndmin=2)
        Z = np.column_stack([X, np.asarray(epochs, dtype=float) / self.t_max])
        gp = self.gp.with_data(Z, costs)
        if optimize and gp.n >= 2:
            gp = fit_hyperparams(gp, n_restarts=n_restarts, seed=seed)
        return CostModel(self.dim, self.t_max, gp)

    def mean_grid(self, X, epochs):
        """Predicted cumulative cost, shape ``(len(X), len(epochs))``.

        Under the linear epoch kernel the mean is affine in the epoch; far from
        the data its slope can come out negative, so it is clamped at zero to
        keep predicted cost non-decreasing.
        """
        X = np.array(X, dtype=float, ndmin=2)
        epochs = np.atleast_1d(np.asarray(epochs, dtype=float))
        if isinstance(self.gp.kernel.kt, Linear) and self.gp.n > 0:
            ends = np.array([0.0, self.t_max])
            Z = np.column_stack([np.repeat(X, 2, axis=0), np.tile(ends / self.t_max, X.shape[0])])
            e = self.gp.posterior(Z).mean.reshape(-1, 2)
            mean = e[:, :1] + np.maximum(e[:, 1:] - e[:, :1], 0.0) * (epochs / self.t_max)[None, :]
        else:
            Z = np.column_stack([np.repeat(X, epochs.size, axis=0), np.tile(epochs / self.t_max, X.shape[0])])
            mean = self.gp.posterior(Z).mean.reshape(X.shape[0], epochs.size)
        return np.maximum(mean, COST_FLOOR)

    def predict(self, x, epochs):
        """Mean (floored, non-decreasing) and variance of cumulative cost at ``x``."""
        post = self.gp.posterior(self.inputs(x, epochs))
        return self.mean_grid(np.asarray(x, dtype=float)[None, :], epochs)[0], post.variance

    def incremental(self, restart, x, epochs):
        """Predicted charge for training ``x`` up to each of ``epochs``."""
        epochs = np.atleast_1d(np.asarray(epochs, dtype=float))
        t_paid, _ = restart.paid(x)
        mu, _ = self.predict(x, epochs)
        if t_paid <= 0:
            return mu
        mu_paid, _ = self.predict(x, [t_paid])
        return np.maximum(mu - mu_paid[0], 0.0)


def predict_cost(model, x, t):
    """``(mean, variance)`` of cumulative cost at a single ``(x, epoch)``."""
    mu, var = model.predict(x, [t])
    return float(mu[0]), float(var[0])


def incremental_cost(model, restart, x, t):
    """Restart-aware predicted charge ``max(0, mu(x, t) - mu(x, t_paid))``."""
    if t < 1:
        raise ValueError("epoch must be >= 1")
    return float(model.incremental(restart, x, [t])[0])
