"""Checkpointed training with early termination, and learning-curve subsampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["EvalOutcome", "evaluate", "select_curve_points", "block_size"]

COMPLETED = "completed_t_opt"
EARLY = "early_terminated"
BUDGET = "budget_exhausted"
FAILED = "failed"


def block_size(p, t_max):
    """Checkpoint block in whole epochs, ``ceil(p * t_max)``."""
    return max(1, math.ceil(p * t_max - 1e-9))


@dataclass
class EvalOutcome:
    """Result of one (possibly resumed) training run.

    ``curve`` holds ``(epoch, value, incremental_cost)`` for the newly trained
    epochs; ``checks`` records every early-termination test as a dict with
    keys ``t_done, t_opt, mean, sd_opt, sd_now, fired``.
    """

    x: np.ndarray
    start_epoch: int
    curve: list = field(default_factory=list)
    reason: str = COMPLETED
    charged: float = 0.0
    checks: list = field(default_factory=list)
    error: BaseException = None

    @property
    def failed(self):
        return self.reason == FAILED

    @property
    def epochs(self):
        return np.array([c[0] for c in self.curve], dtype=int)

    @property
    def values(self):
        return np.array([c[1] for c in self.curve], dtype=float)

    @property
    def final_epoch(self):
        return self.curve[-1][0] if self.curve else self.start_epoch


def select_curve_points(model, x, epochs, t_max, n_extra=2):
    """Indices of the curve points to add to the objective model.

    The last epoch is always kept; up to ``n_extra`` more points are the ones
    with the highest posterior variance under ``model`` (any object with
    ``predict(Zs)`` returning mean and variance).
    """
    epochs = np.asarray(epochs, dtype=int)
    n = epochs.size
    if n == 0:
        return np.zeros(0, dtype=int)
    if n <= n_extra + 1:
        return np.arange(n)
    Zs = np.column_stack([np.tile(np.asarray(x, dtype=float), (n - 1, 1)), epochs[:-1] / t_max])
    _, var = model.predict(Zs)
    # stable sort: earlier epochs win ties
    top = np.argsort(-var, kind="stable")[:n_extra]
    return np.sort(np.append(top, n - 1))


def _refreshed_model(state, x, epochs, values):
    """Objective model with the selected points of a partial curve inserted."""
    idx = select_curve_points(state.obj_gp, x, epochs, state.t_max)
    Zn = np.column_stack([np.tile(x, (idx.size, 1)), epochs[idx] / state.t_max])
    Z = np.vstack([state.obj_Z, Zn]) if len(state.obj_y) else Zn
    y = np.concatenate([state.obj_y, values[idx]])
    gp = state.obj_gp.with_data(Z, y)
    return state.make_objective_model(gp)


def evaluate(backend, x, t_opt, state, early_stop=True):
    """Train ``x`` towards ``t_opt`` in checkpoint blocks.

    After each block that does not reach the target, the objective model is
    refreshed with the block's selected points and the conservative stopping
    epoch ``t_n`` is recomputed.  Training stops early when the predicted
    value at ``t_n`` does not beat the incumbent *and* its standard deviation
    is at most ``tau`` times the one at the current epoch; otherwise the target
    becomes ``t_n``; reaching a revised target short of ``t_opt`` triggers one
    more test.  The ledger is charged per epoch as training happens and the
    run halts at the next checkpoint once the budget is gone.

    ``state`` provides ``t_max``, ``config`` (``p``, ``eps``, ``tau``),
    ``ledger``, ``restart``, ``incumbent`` and the objective-model hooks.
    """
    cfg = state.config
    t_max = state.t_max
    x = np.asarray(x, dtype=float)
    t_paid, _ = state.restart.paid(x)
    out = EvalOutcome(x=x, start_epoch=t_paid)
    if t_paid >= t_max:
        return out
    target = planned = int(min(max(t_opt, t_paid + 1), t_max))
    block = block_size(cfg.p, t_max)
    t_done = t_paid
    while True:
        if state.ledger.exhausted:
            out.reason = BUDGET
            break
        end = min(t_done + block, target)
        try:
            rows = backend.train(x, t_done, end)
        except Exception as exc:  # backend failure: keep what we have
            out.reason, out.error = FAILED, exc
            break
        for epoch, value, inc in rows:
            state.ledger.charge(inc)
            out.charged += inc
            out.curve.append((int(epoch), float(value), float(inc)))
        t_done = end
        if t_done >= target:
            # a revised target short of the plan gets one last check
            if early_stop and target < planned and _check(state, out, x, t_done):
                out.reason = EARLY
            else:
                out.reason = COMPLETED
            break
        if state.ledger.exhausted:
            out.reason = BUDGET
            break
        if not early_stop:
            continue
        if _check(state, out, x, t_done):
            out.reason = EARLY
            break
        target = int(min(max(out.checks[-1]["t_opt"], t_done), t_max))
        if t_done >= target:
            out.reason = COMPLETED
            break
    return out


def _check(state, out, x, t_done):
    """Early-termination test after ``t_done`` epochs; appends to ``out.checks``."""
    from .planner import conservative_stopping

    cfg = state.config
    t_max = state.t_max
    model = _refreshed_model(state, x, out.epochs, out.values)
    t_n = conservative_stopping(model, x, t_max, cfg.eps)
    mean, var = model.curve(x, np.array([t_n, t_done]) / t_max)
    sd_opt = math.sqrt(max(var[0], 0.0))
    if cfg.sigma_reference == "prior":
        _, v_now = state.obj_model.curve(x, [t_done / t_max])
        sd_now = math.sqrt(max(v_now[0], 0.0))
    else:
        sd_now = math.sqrt(max(var[1], 0.0))
    fired = bool(mean[0] <= state.incumbent and sd_opt <= cfg.tau * sd_now)
    out.checks.append(dict(t_done=t_done, t_opt=int(t_n), mean=float(mean[0]),
                           sd_opt=sd_opt, sd_now=sd_now, fired=fired))
    return fired
