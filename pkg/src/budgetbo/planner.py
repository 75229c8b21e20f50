"""The budget-aware planning loop.

Each iteration builds a horizon of configurations by greedy batch EI at the
final epoch, attaches to each its conservative stopping epoch and predicted
(restart-aware) cost until the remaining budget is used up, evaluates the
entry with the best EI per unit cost, and updates both models.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import qmc

from .acquisition import FantasyBatch, ei, expected_improvement, greedy_append
from .cost import CostModel, RestartState
from .evaluator import BUDGET, COMPLETED, EARLY, FAILED, block_size, evaluate, select_curve_points
from .exceptions import BackendError, ConfigError
from .gp import GPModel, fit_hyperparams
from .kernels import RBF, ExpDecay, Product
from .monotone import MonotoneGP

__all__ = [
    "BAPIConfig",
    "BudgetLedger",
    "HorizonEntry",
    "Horizon",
    "OptState",
    "RunResult",
    "conservative_stopping",
    "build_horizon",
    "select_query",
    "bapi_run",
]

log = logging.getLogger("budgetbo")

EXHAUSTED_RTOL = 1e-9
EVENT_OF = {COMPLETED: "evaluate", EARLY: "early_stop", BUDGET: "budget_stop", FAILED: "evaluate"}


@dataclass
class BAPIConfig:
    """Optimizer settings.

    ``sigma_reference`` picks the model used for the uncertainty at the
    current epoch in the early-termination test: ``"prior"`` (before the
    block's points are inserted) or ``"posterior"`` (after).
    """

    eps: float = 0.01
    tau: float = 2.0
    p: float = 0.2
    max_horizon: int = 4
    n_init: int = 5
    n_mc: int = 128
    n_samples: int = 200
    refit_every: int = 5
    parallel: int = 1
    n_starts: int = 10
    n_refine: int = 1
    max_evals: int = 30
    fit_restarts: int = 5
    n_resume: int = 3
    sigma_reference: str = "posterior"
    objective_noise: float = 1e-4

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not self.tau >= 1:
            raise ConfigError("tau must be >= 1")
        if not 0 < self.p <= 1:
            raise ConfigError("p must be in (0, 1]")
        if self.max_horizon < 1 or self.n_init < 0 or self.parallel < 1:
            raise ConfigError("max_horizon and parallel must be >= 1, n_init >= 0")
        if self.n_mc < 64:
            raise ConfigError("n_mc must be >= 64")
        if self.sigma_reference not in ("prior", "posterior"):
            raise ConfigError("sigma_reference must be 'prior' or 'posterior'")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**d)


class BudgetLedger:
    """Total, spent and remaining budget; only actual charges move it."""

    def __init__(self, total):
        if not total >= 0:
            raise ConfigError("budget must be nonnegative")
        self.total = float(total)
        self.spent = 0.0
        self.charges = []

    def charge(self, amount):
        amount = float(amount)
        if amount < 0 or not math.isfinite(amount):
            raise ValueError(f"invalid charge {amount}")
        self.spent += amount
        self.charges.append(amount)

    @property
    def remaining(self):
        return self.total - self.spent

    @property
    def exhausted(self):
        # a rounding-level remainder does not buy anything
        return self.remaining <= EXHAUSTED_RTOL * max(self.total, 1.0)

    @property
    def overrun(self):
        return max(0.0, self.spent - self.total)


@dataclass
class HorizonEntry:
    x: np.ndarray
    t_opt: int
    cost: float
    qei: float = 0.0
    ei: float = None


@dataclass
class Horizon:
    entries: list = field(default_factory=list)
    remaining: float = 0.0

    def __len__(self):
        return len(self.entries)


def conservative_stopping(model, x, t_max, eps):
    """Smallest epoch ``t`` in ``[1, t_max]`` with ``mu(t_max) - mu(t) <= eps``.

    ``model`` is either an object with ``curve(x, ts)`` (normalized epochs)
    or a callable mapping an integer epoch to the predicted mean.  Binary
    search; correct whenever the mean is non-decreasing in the epoch.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    t_max = int(t_max)
    if callable(model) and not hasattr(model, "curve"):
        mean = model
    else:
        mu, _ = model.curve(x, np.arange(1, t_max + 1) / t_max)
        mean = lambda t: mu[t - 1]  # noqa: E731
    top = mean(t_max)
    lo, hi = 1, t_max
    while lo < hi:
        mid = (lo + hi) // 2
        if top - mean(mid) <= eps:
            hi = mid
        else:
            lo = mid + 1
    return lo


def default_objective_kernel(dim):
    return Product(RBF((0.5,) * dim), ExpDecay(1.0, 0.5, 0.1), 1.0)


class OptState:
    """Everything the loop owns: data, models, ledger, restarts and trace."""

    def __init__(self, backend, budget, config=None, seed=0):
        self.backend = backend
        self.config = config or BAPIConfig()
        self.seed = int(seed)
        self.t_max = int(backend.t_max)
        self.dim = int(backend.dim)
        self.ledger = BudgetLedger(budget)
        self.restart = RestartState()
        self.rng = np.random.default_rng([self.seed, 1])
        self.obj_Z = np.zeros((0, self.dim + 1))
        self.obj_y = np.zeros(0)
        self.cost_X = np.zeros((0, self.dim))
        self.cost_e = np.zeros(0)
        self.cost_c = np.zeros(0)
        self.incumbent = -np.inf
        self.best = None  # (x, epoch, value)
        self.n_evals = 0
        self.last_optimized = 0
        self.iteration = 0
        self.trace = []
        self.obj_gp = GPModel(default_objective_kernel(self.dim), noise=self.config.objective_noise)
        self.obj_model = self.make_objective_model(self.obj_gp)
        self.cost_model = CostModel(self.dim, self.t_max)

    # --- models -------------------------------------------------------------
    def make_objective_model(self, gp):
        return MonotoneGP(gp, (1.0 / self.t_max, 1.0), self.config.n_samples, seed=self.seed)

    @property
    def y_best_std(self):
        return float(self.obj_model.to_std(self.incumbent))

    def refit(self, optimize=False):
        fit_seed = self.seed * 1000 + self.n_evals
        if optimize:
            self.last_optimized = self.n_evals
        if self.obj_y.size:
            gp = self.obj_gp.with_data(self.obj_Z, self.obj_y)
            if optimize and gp.n >= 2:
                gp = fit_hyperparams(gp, n_restarts=self.config.fit_restarts, seed=fit_seed)
            self.obj_gp = gp
            self.obj_model = self.make_objective_model(gp)
        if self.cost_c.size:
            self.cost_model = self.cost_model.fit(
                self.cost_X, self.cost_e, self.cost_c, optimize=optimize and self.cost_c.size >= 2,
                seed=fit_seed, n_restarts=self.config.fit_restarts,
            )

    # --- bookkeeping --------------------------------------------------------
    def record(self, outcome, event=None):
        """Fold an evaluation into the data, restart state, incumbent and trace."""
        if not outcome.curve:
            return
        x = outcome.x
        epochs, values = outcome.epochs, outcome.values
        idx = select_curve_points(self.obj_gp, x, epochs, self.t_max)
        Zn = np.column_stack([np.tile(x, (idx.size, 1)), epochs[idx] / self.t_max])
        self.obj_Z = np.vstack([self.obj_Z, Zn])
        self.obj_y = np.concatenate([self.obj_y, values[idx]])

        _, paid_cost = self.restart.paid(x)
        cum = paid_cost + np.cumsum([c[2] for c in outcome.curve])
        self.cost_X = np.vstack([self.cost_X, np.tile(x, (idx.size, 1))])
        self.cost_e = np.concatenate([self.cost_e, epochs[idx]])
        self.cost_c = np.concatenate([self.cost_c, cum[idx]])
        self.restart.update(x, epochs[-1], cum[-1])

        j = int(np.argmax(values))
        if values[j] > self.incumbent:
            self.incumbent = float(values[j])
            self.best = (x.copy(), int(epochs[j]), float(values[j]))
        self.n_evals += 1
        self.trace.append({
            "iteration": self.iteration,
            "event": event or EVENT_OF[outcome.reason],
            "config_coords": ";".join(repr(float(v)) for v in x),
            "epochs_trained": int(epochs[-1]),
            "actual_cost": repr(float(outcome.charged)),
            "cumulative_cost": repr(float(self.ledger.spent)),
            "value": repr(float(values[-1])),
            "incumbent_value": repr(float(self.incumbent)),
        })

    def candidate_domain(self):
        """Search domain for new configs: the cube, or untrained-to-the-end table rows."""
        cands = getattr(self.backend, "candidates", None)
        if cands is None:
            return self.dim
        keep = [i for i, x in enumerate(cands) if self.restart.paid(x)[0] < self.t_max]
        return cands[keep]

    def resumable(self):
        X, t_paid = self.restart.stored()
        if X.size == 0:
            return None
        return X[t_paid < self.t_max]


@dataclass
class RunResult:
    trace: list
    best: tuple
    ledger: BudgetLedger
    n_evals: int
    state: OptState = None


def initial_design(state):
    """``n_init`` scrambled Sobol configs (or table rows), each trained one block."""
    cfg = state.config
    n = cfg.n_init
    if n == 0:
        return
    m = max(int(math.ceil(math.log2(n))), 0)
    sob = qmc.Sobol(state.dim, scramble=True, seed=state.seed).random_base2(m)[:n]
    cands = getattr(state.backend, "candidates", None)
    if cands is not None:
        picks = []
        for u in sob:
            d = np.sum((cands - u) ** 2, axis=1)
            d[picks] = np.inf
            picks.append(int(np.argmin(d)))
        sob = cands[picks]
    t0 = block_size(cfg.p, state.t_max)
    for x in sob:
        if state.ledger.exhausted:
            break
        out = evaluate(state.backend, x, t0, state, early_stop=False)
        state.record(out, "init" if out.reason == COMPLETED else None)
        if out.failed:
            raise BackendError(f"backend failed on initial design: {out.error}")


def build_horizon(state, budget_left, max_horizon):
    """Greedy batch-EI horizon whose predicted costs fit ``budget_left``.

    Configs are chosen one at a time by maximizing the batch EI at the final
    epoch with shared base samples; each gets its conservative stopping
    epoch and restart-aware predicted cost.  The first entry is always kept;
    if it is unaffordable its epoch is lowered to the largest affordable one
    (one checkpoint block if none is).
    """
    cfg = state.config
    model = state.obj_model
    t_max = state.t_max
    domain = state.candidate_domain()
    if not np.isscalar(domain) and len(domain) == 0:
        return Horizon([], budget_left)
    extra = state.resumable() if np.isscalar(domain) else None
    if extra is not None and len(extra) > cfg.n_resume:
        # screen stored configs by plain EI at the final epoch
        mu, var = state.obj_gp.predict(np.column_stack([extra, np.ones(len(extra))]))
        e = expected_improvement(mu, np.sqrt(var), state.y_best_std)
        extra = extra[np.argsort(-e, kind="stable")[: cfg.n_resume]]
    batch = FantasyBatch.new(state.y_best_std, cfg.n_mc, max_horizon, seed=int(state.rng.integers(2**31)))
    best_x = state.best[0] if state.best is not None else None
    remaining = float(budget_left)
    entries = []
    for k in range(max_horizon):
        x, val = greedy_append(
            model, batch, domain, 1.0, rng=state.rng, best_x=best_x, extra=extra,
            n_starts=cfg.n_starts, n_refine=cfg.n_refine, max_evals=cfg.max_evals,
        )
        t_paid, _ = state.restart.paid(x)
        t_opt = conservative_stopping(model, x, t_max, cfg.eps)
        t_opt = int(min(max(t_opt, t_paid + 1), t_max))
        cost = float(state.cost_model.incremental(state.restart, x, [t_opt])[0])
        if k == 0:
            if cost > remaining:
                ts = np.arange(t_paid + 1, t_opt + 1)
                costs = state.cost_model.incremental(state.restart, x, ts)
                ok = np.flatnonzero(costs <= remaining)
                if ok.size:
                    t_opt, cost = int(ts[ok[-1]]), float(costs[ok[-1]])
                else:
                    t_opt = int(min(max(block_size(cfg.p, t_max), t_paid + 1), t_max))
                    cost = float(state.cost_model.incremental(state.restart, x, [t_opt])[0])
        elif cost > remaining:
            break
        entries.append(HorizonEntry(np.asarray(x, dtype=float), t_opt, cost, val))
        remaining -= cost
        batch = batch.with_query(np.append(x, 1.0))
    return Horizon(entries, remaining)


def select_query(horizon, model=None, y_best=None, budget_total=1.0, t_max=1, k=1):
    """Entry (or top ``k`` entries) with the best EI per unit predicted cost.

    EI is evaluated at each entry's conservative stopping epoch under
    ``model`` (at normalized epoch ``t_opt / t_max``); entries that already carry ``ei`` are used as-is when no model
    is given.  Costs are floored at ``1e-6 * budget_total``.  Ties go to the
    larger EI, then the lexicographically smaller config.
    """
    if not horizon.entries:
        raise ValueError("empty horizon")
    floor = 1e-6 * budget_total
    keys = []
    for i, e in enumerate(horizon.entries):
        if model is not None:
            e.ei = ei(model, np.append(e.x, e.t_opt / t_max), y_best)
        ratio = e.ei / max(e.cost, floor)
        keys.append((-ratio, -e.ei, tuple(np.asarray(e.x, dtype=float)), i))
    keys.sort()
    chosen = [horizon.entries[kk[-1]] for kk in keys[:k]]
    return chosen[0] if k == 1 else chosen


def bapi_run(backend, budget, config=None, seed=0, state=None):
    """Run the full budget-aware loop on ``backend`` with total budget ``budget``.

    Returns a :class:`RunResult`; a backend failure raises
    :class:`~budgetbo.exceptions.BackendError` whose ``result`` attribute
    holds the partial run.
    """
    state = state or OptState(backend, budget, config, seed)
    cfg = state.config
    try:
        initial_design(state)
        state.refit(optimize=True)
        while not state.ledger.exhausted:
            state.iteration += 1
            horizon = build_horizon(state, state.ledger.remaining, cfg.max_horizon)
            if not horizon.entries:
                log.info("no candidate left; stopping")
                break
            picks = select_query(horizon, state.obj_model, state.y_best_std, state.ledger.total,
                                 state.t_max, k=min(cfg.parallel, len(horizon)))
            picks = [picks] if cfg.parallel == 1 else picks
            for entry in picks:
                if state.ledger.exhausted:
                    break
                out = evaluate(backend, entry.x, entry.t_opt, state)
                if not out.curve and not out.failed and np.isscalar(state.candidate_domain()):
                    # the pick was already trained to t_max: spend on a fresh config instead
                    x = state.rng.random(state.dim)
                    t = conservative_stopping(state.obj_model, x, state.t_max, cfg.eps)
                    out = evaluate(backend, x, t, state)
                state.record(out)
                log.info(
                    "iter %d x=%s t_opt=%d pred=%.4g actual=%.4g y=%s best=%.4g left=%.4g",
                    state.iteration, np.round(entry.x, 4).tolist(), entry.t_opt, entry.cost,
                    out.charged, out.values[-1] if out.curve else None, state.incumbent,
                    state.ledger.remaining,
                )
                if out.failed:
                    raise BackendError(f"backend failed: {out.error}")
            state.refit(optimize=state.n_evals - state.last_optimized >= cfg.refit_every)
    except BackendError as exc:
        exc.result = RunResult(state.trace, state.best, state.ledger, state.n_evals, state)
        raise
    return RunResult(state.trace, state.best, state.ledger, state.n_evals, state)
