"""Expected improvement, Monte-Carlo batch EI and greedy batch construction.

Models passed here only need ``predict(Zs, full_cov=False)`` returning the
mean and (co)variance in standardized units; both
:class:`~budgetbo.gp.GPModel` and :class:`~budgetbo.monotone.MonotoneGP`
qualify.  Incumbents ``y_best`` are in the same standardized units.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import _accel
from .gp import robust_cholesky

__all__ = [
    "expected_improvement",
    "ei",
    "qei",
    "qei_estimate",
    "FantasyBatch",
    "greedy_append",
    "greedy_batch",
    "pattern_search",
]

SIGMA_TINY = 1e-12


def expected_improvement(mu, sigma, y_best):
    """Closed-form EI, vectorized; ``max(mu - y_best, 0)`` where ``sigma < 1e-12``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = mu - y_best
    safe = np.where(sigma < SIGMA_TINY, 1.0, sigma)
    u = diff / safe
    val = safe * (u * norm.cdf(u) + norm.pdf(u))
    out = np.where(sigma < SIGMA_TINY, np.maximum(diff, 0.0), np.maximum(val, 0.0))
    return out if out.ndim else float(out)


def ei(model, z, y_best):
    """EI of a single query ``z = [x, t]`` under ``model``."""
    mu, var = model.predict(np.atleast_2d(z))
    return float(expected_improvement(mu[0], np.sqrt(max(var[0], 0.0)), y_best))


def _canonical(batch, base):
    batch = np.array(batch, dtype=float, ndmin=2)
    q = batch.shape[0]
    base = np.asarray(base, dtype=float)
    if base.ndim != 2 or base.shape[1] < q:
        raise ValueError(f"need at least {q} base-sample columns, got {base.shape}")
    order = np.lexsort(batch.T[::-1])
    return batch[order], np.ascontiguousarray(base[:, :q][:, order])


def qei_estimate(model, batch, y_best, base_samples):
    """Monte-Carlo q-EI and its standard error.

    Samples are ``mu + L z`` with ``L`` the Cholesky factor of the joint
    posterior covariance.  The batch is put in lexicographic order (and the
    base-sample columns with it) first, so the estimate does not depend on
    the order of the queries.
    """
    batch, base = _canonical(batch, base_samples)
    mu, cov = model.predict(batch, full_cov=True)
    L, _ = robust_cholesky(0.5 * (cov + cov.T))
    m, se = _accel.qei_reduce(
        np.ascontiguousarray(mu, dtype=float), np.ascontiguousarray(L), base, float(y_best)
    )
    return float(m), float(se)


def qei(model, batch, y_best, base_samples):
    return qei_estimate(model, batch, y_best, base_samples)[0]


@dataclass
class FantasyBatch:
    """Partially built batch sharing one base-sample matrix."""

    pending: list = field(default_factory=list)
    base: np.ndarray = None
    y_best: float = 0.0

    def __post_init__(self):
        if self.base is None:
            raise ValueError("base samples required")
        self.base = np.asarray(self.base, dtype=float)
        if self.base.shape[0] < 64:
            raise ValueError("need at least 64 Monte-Carlo samples")

    @classmethod
    def new(cls, y_best, n_mc=128, max_q=4, seed=0):
        base = np.random.default_rng(seed).standard_normal((n_mc, max_q))
        return cls([], base, float(y_best))

    def with_query(self, z):
        return FantasyBatch(self.pending + [np.asarray(z, dtype=float)], self.base, self.y_best)

    def value(self, model, extra=None):
        rows = list(self.pending) if extra is None else list(self.pending) + [extra]
        if not rows:
            return 0.0
        return qei(model, np.array(rows), self.y_best, self.base)


def pattern_search(f, x0, step=0.1, min_step=0.0125, max_evals=60, f0=None):
    """Maximize ``f`` over the unit cube by compass search from ``x0``.

    Polls ``+-step`` along each axis, moves on the first improvement and
    halves the step when a full poll fails.
    """
    x = np.clip(np.asarray(x0, dtype=float), 0.0, 1.0)
    fx = f(x) if f0 is None else f0
    evals = 0
    d = x.size
    while step >= min_step and evals < max_evals:
        moved = False
        for j in range(d):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[j] = min(max(y[j] + sgn * step, 0.0), 1.0)
                if y[j] == x[j]:
                    continue
                fy = f(y)
                evals += 1
                if fy > fx:
                    x, fx, moved = y, fy, True
                    break
            if moved or evals >= max_evals:
                break
        if not moved:
            step *= 0.5
    return x, fx


def _best(points, values):
    """Argmax with ties broken by the lexicographically smallest point."""
    values = np.asarray(values)
    top = np.flatnonzero(values == values.max())
    if top.size == 1:
        return int(top[0])
    pts = np.asarray(points)[top]
    return int(top[np.lexsort(pts.T[::-1])[0]])


def greedy_append(model, partial, candidate_domain, t_fixed=1.0, rng=None, best_x=None,
                  extra=None, n_starts=10, n_refine=3, max_evals=60):
    """Config maximizing ``qei(partial + [(x, t_fixed)])``.

    Parameters
    ----------
    candidate_domain : int or ndarray
        Dimension of the continuous unit cube, or an ``(m, d)`` array of
        allowed configs (searched exhaustively).
    rng : numpy Generator
        Source of the multi-start points (continuous domain only).
    best_x : array, optional
        Best observed config; two of the starts perturb it.
    extra : ndarray, optional
        Additional configs scored as-is, e.g. partially trained ones that may
        be resumed.
    n_refine : int
        Number of best starts refined by :func:`pattern_search`.

    Returns
    -------
    x : ndarray
    value : float
        The batch q-EI including ``x``.
    """

    def score(x):
        return partial.value(model, np.append(x, t_fixed))

    if not np.isscalar(candidate_domain):
        cands = np.array(candidate_domain, dtype=float, ndmin=2)
        if cands.shape[0] == 0:
            raise ValueError("empty candidate set")
        vals = [score(x) for x in cands]
        i = _best(cands, vals)
        return cands[i].copy(), float(vals[i])

    d = int(candidate_domain)
    rng = np.random.default_rng(0) if rng is None else rng
    n_pert = 2 if best_x is not None else 0
    starts = [rng.random(d) for _ in range(n_starts - n_pert)]
    for _ in range(n_pert):
        starts.append(np.clip(np.asarray(best_x) + 0.05 * rng.standard_normal(d), 0.0, 1.0))
    starts = np.array(starts)
    vals = np.array([score(x) for x in starts])

    pts, res = [], []
    order = np.argsort(-vals, kind="stable")[:n_refine]
    for i in order:
        x, fx = pattern_search(score, starts[i], max_evals=max_evals, f0=vals[i])
        pts.append(x)
        res.append(fx)
    pts.extend(starts)
    res.extend(vals)
    if extra is not None and len(extra):
        extra = np.array(extra, dtype=float, ndmin=2)
        pts.extend(extra)
        res.extend(score(x) for x in extra)
    i = _best(np.array(pts), res)
    return np.array(pts[i]), float(res[i])


def greedy_batch(model, q, candidate_domain, y_best, n_mc=128, t_fixed=1.0, seed=0, **kw):
    """Sequential greedy batch of ``q`` configs (all at ``t_fixed``) with shared samples."""
    batch = FantasyBatch.new(y_best, n_mc=n_mc, max_q=q, seed=seed)
    rng = np.random.default_rng(seed)
    chosen = []
    for _ in range(q):
        x, _ = greedy_append(model, batch, candidate_domain, t_fixed, rng=rng, **kw)
        chosen.append(x)
        batch = batch.with_query(np.append(x, t_fixed))
    return np.array(chosen), batch.value(model)
