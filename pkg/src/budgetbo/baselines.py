"""Reference policies sharing the ledger, evaluation and trace machinery.

* ``random``: uniform configs trained to ``t_max`` until the budget is gone.
* ``ei_tmax``: myopic EI at ``t_max`` under the unconstrained GP.
* ``ei_per_cost``: EI(x, t) divided by the predicted (incremental) cost,
  maximized jointly over ``x`` and ``t``.  It tends to buy short runs.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from .acquisition import _best, expected_improvement, pattern_search
from .evaluator import evaluate
from .exceptions import BackendError, ConfigError
from .planner import BAPIConfig, OptState, RunResult, initial_design

__all__ = ["run_baseline", "METHODS"]

METHODS = ("random", "ei_tmax", "ei_per_cost")
N_SCREEN = 256


def _ei_grid(state, X, epochs):
    """EI (standardized) at every (config, epoch) pair, shape ``(len(X), len(epochs))``."""
    X = np.atleast_2d(X)
    epochs = np.atleast_1d(epochs)
    Z = np.column_stack([np.repeat(X, epochs.size, axis=0), np.tile(epochs / state.t_max, X.shape[0])])
    mu, var = state.obj_gp.predict(Z)
    y_best = (state.incumbent - state.obj_gp.offset) / state.obj_gp.scale
    return expected_improvement(mu, np.sqrt(var), y_best).reshape(X.shape[0], epochs.size)


def _score_tmax(state, X):
    X = np.atleast_2d(X)
    v = _ei_grid(state, X, np.array([state.t_max]))[:, 0]
    # configs already trained to the end have nothing left to buy
    done = [state.restart.paid(x)[0] >= state.t_max for x in X]
    v[np.asarray(done, dtype=bool)] = -np.inf
    return v


def _score_per_cost(state, X):
    """Best EI per unit incremental cost over epochs, and the epoch achieving it."""
    X = np.atleast_2d(X)
    epochs = np.arange(1, state.t_max + 1)
    E = _ei_grid(state, X, epochs)
    floor = 1e-6 * state.ledger.total
    cm = state.cost_model
    C = cm.mean_grid(X, epochs)
    for i, x in enumerate(X):
        t_paid, _ = state.restart.paid(x)
        if t_paid > 0:
            C[i] = cm.incremental(state.restart, x, epochs)
            E[i, :t_paid] = -np.inf
    ratio = E / np.maximum(C, floor)
    j = np.argmax(ratio, axis=1)
    return ratio[np.arange(X.shape[0]), j], epochs[j]


def _propose(state, score):
    """Maximize a vectorized ``score(X) -> values`` over the search domain."""
    domain = state.candidate_domain()
    if not np.isscalar(domain):
        if len(domain) == 0:
            return None
        vals = score(domain)
        return domain[_best(domain, vals)].copy()
    X = qmc.Sobol(state.dim, scramble=True, seed=int(state.rng.integers(2**31))).random(N_SCREEN)
    extra = state.resumable()
    if extra is not None and len(extra):
        X = np.vstack([X, extra])
    vals = score(X)
    i = _best(X, vals)
    x, fx = pattern_search(lambda z: float(score(z[None, :])[0]), X[i], f0=vals[i],
                           max_evals=state.config.max_evals)
    return x


def _run_random(state):
    cands = getattr(state.backend, "candidates", None)
    while not state.ledger.exhausted:
        state.iteration += 1
        if cands is None:
            x = state.rng.random(state.dim)
        else:
            dom = state.candidate_domain()
            if len(dom) == 0:
                break
            x = dom[state.rng.integers(len(dom))]
        out = evaluate(state.backend, x, state.t_max, state, early_stop=False)
        state.record(out)
        if out.failed:
            raise BackendError(f"backend failed: {out.error}")


def _run_model_based(state, method):
    initial_design(state)
    state.refit(optimize=True)
    while not state.ledger.exhausted:
        state.iteration += 1
        if method == "ei_tmax":
            x = _propose(state, lambda X: _score_tmax(state, X))
            t = state.t_max
        else:
            x = _propose(state, lambda X: _score_per_cost(state, X)[0])
            t = None if x is None else int(_score_per_cost(state, x[None, :])[1][0])
        if x is None:
            break
        out = evaluate(state.backend, x, t, state, early_stop=False)
        if not out.curve and not out.failed:
            # proposal had nothing left to train: fall back to a fresh random config
            x = state.rng.random(state.dim) if np.isscalar(state.candidate_domain()) else x
            out = evaluate(state.backend, x, t, state, early_stop=False)
            if not out.curve and not out.failed:
                break
        state.record(out)
        if out.failed:
            raise BackendError(f"backend failed: {out.error}")
        state.refit(optimize=state.n_evals - state.last_optimized >= state.config.refit_every)


def run_baseline(method, backend, budget, seed=0, config=None):
    """Run a baseline policy; returns a :class:`~budgetbo.planner.RunResult`."""
    if method not in METHODS:
        raise ConfigError(f"unknown baseline {method!r}; choose from {METHODS}")
    state = OptState(backend, budget, config or BAPIConfig(), seed)
    try:
        if method == "random":
            _run_random(state)
        else:
            _run_model_based(state, method)
    except BackendError as exc:
        exc.result = RunResult(state.trace, state.best, state.ledger, state.n_evals, state)
        raise
    return RunResult(state.trace, state.best, state.ledger, state.n_evals, state)
