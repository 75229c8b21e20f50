"""Experiment runner: configs, per-run traces, aggregation and plots."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import METHODS as BASELINES
from .baselines import run_baseline
from .exceptions import BackendError, ConfigError
from .learners import CurveTable, SyntheticProblem
from .planner import BAPIConfig, bapi_run

__all__ = [
    "RunConfig",
    "TRACE_FIELDS",
    "load_config",
    "make_backend",
    "run_single",
    "run_experiment",
    "read_trace",
    "aggregate_traces",
    "write_aggregate",
    "read_aggregate",
    "emit_plot",
]

log = logging.getLogger("budgetbo")

METHODS = ("bapi",) + BASELINES
TRACE_FIELDS = [
    "iteration", "event", "config_coords", "epochs_trained",
    "actual_cost", "cumulative_cost", "value", "incumbent_value",
]
AGG_FIELDS = ["method", "cost", "mean", "stderr", "n_runs"]
N_GRID = 200
_OPT_KEYS = ("eps", "tau", "p", "max_horizon", "n_init")


@dataclass
class RunConfig:
    """Validated experiment description (see :func:`load_config`)."""

    backend: dict
    methods: list
    seeds: list
    budget: float = None
    budget_full_evals: float = None
    optimizer: dict = field(default_factory=dict)
    output_dir: str = "runs"

    def __post_init__(self):
        if not isinstance(self.backend, dict) or self.backend.get("type") not in ("synthetic", "table"):
            raise ConfigError("backend.type must be 'synthetic' or 'table'")
        if isinstance(self.methods, str):
            self.methods = [self.methods]
        if not self.methods:
            raise ConfigError("at least one method required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be distinct")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a nonempty list of integers")
        if (self.budget is None) == (self.budget_full_evals is None):
            raise ConfigError("give exactly one of budget and budget_full_evals")
        b = self.budget if self.budget is not None else self.budget_full_evals
        if not (isinstance(b, (int, float)) and b > 0):
            raise ConfigError("budget must be positive")
        self.settings()  # validates optimizer fields

    def settings(self):
        try:
            return BAPIConfig.from_dict(self.optimizer)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        opt = dict(d.pop("optimizer", {}) or {})
        for k in _OPT_KEYS:
            if k in d:
                opt[k] = d.pop(k)
        if "method" in d:
            if "methods" in d:
                raise ConfigError("give either method or methods")
            d["methods"] = d.pop("method")
        if "t_max" in d:
            d.setdefault("backend", {})
            d["backend"] = {**d["backend"], "t_max": d.pop("t_max")}
        known = {"backend", "methods", "seeds", "budget", "budget_full_evals", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(optimizer=opt, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return {
            "backend": self.backend, "methods": self.methods, "seeds": self.seeds,
            "budget": self.budget, "budget_full_evals": self.budget_full_evals,
            "optimizer": self.optimizer, "output_dir": self.output_dir,
        }


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(d)


def make_backend(spec, seed=0):
    """Backend for one run; synthetic problems may vary with the run seed."""
    spec = dict(spec)
    kind = spec.pop("type")
    if kind == "table":
        try:
            return CurveTable.read(spec["path"])
        except (KeyError, OSError, ValueError) as exc:
            raise ConfigError(f"cannot load table: {exc}") from exc
    vary = bool(spec.pop("vary_seed", False))
    base = int(spec.pop("seed", 0))
    try:
        return SyntheticProblem(seed=base + seed if vary else base, **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synthetic backend: {exc}") from exc


def _budget(config, backend):
    if config.budget is not None:
        return float(config.budget)
    return float(config.budget_full_evals * backend.full_cost_estimate())


def trace_path(out_dir, method, seed):
    return Path(out_dir) / f"trace_{method}_seed{seed}.csv"


def write_trace(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_trace(path):
    """Trace rows with numeric fields converted."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, r in enumerate(csv.DictReader(fh), start=2):
            try:
                rows.append({
                    "iteration": int(r["iteration"]),
                    "event": r["event"],
                    "x": np.array([float(v) for v in r["config_coords"].split(";")]),
                    "epochs_trained": int(r["epochs_trained"]),
                    "actual_cost": float(r["actual_cost"]),
                    "cumulative_cost": float(r["cumulative_cost"]),
                    "value": float(r["value"]),
                    "incumbent_value": float(r["incumbent_value"]),
                })
            except (KeyError, ValueError, AttributeError) as exc:
                raise ValueError(f"{path}: malformed row {i}: {exc}") from exc
    return rows


def run_single(config, method, seed, out_dir):
    """One (method, seed) run; writes its trace and summary and returns the summary."""
    backend = make_backend(config.backend, seed)
    budget = _budget(config, backend)
    settings = config.settings()
    status, result = "ok", None
    try:
        if method == "bapi":
            result = bapi_run(backend, budget, settings, seed)
        else:
            result = run_baseline(method, backend, budget, seed, settings)
    except BackendError as exc:
        status, result = f"failed: {exc}", getattr(exc, "result", None)
    rows = result.trace if result is not None else []
    write_trace(trace_path(out_dir, method, seed), rows)
    summary = {
        "method": method,
        "seed": seed,
        "status": status,
        "budget": budget,
        "spent": result.ledger.spent if result else 0.0,
        "overrun": result.ledger.overrun if result else 0.0,
        "final_event": rows[-1]["event"] if rows else None,
        "n_evaluations": len(rows),
        "best_value": result.best[2] if result and result.best else None,
        "best_config": result.best[0].tolist() if result and result.best else None,
        "best_epoch": result.best[1] if result and result.best else None,
    }
    path = Path(out_dir) / f"summary_{method}_seed{seed}.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _run_job(args):
    cfg_dict, method, seed, out_dir = args
    return run_single(RunConfig.from_dict(cfg_dict), method, seed, out_dir)


def run_experiment(config, out_dir=None, parallel=1, seed_offset=0):
    """Run every (method, seed), then aggregate.

    Returns the list of per-run summaries in (method, seed) order.
    """
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [s + seed_offset for s in config.seeds]
    jobs = [(config.to_dict(), m, s, str(out_dir)) for m in config.methods for s in seeds]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            summaries = list(pool.map(_run_job, jobs))
    else:
        summaries = [_run_job(j) for j in jobs]
    budget = max(s["budget"] for s in summaries)
    traces = {
        m: [read_trace(trace_path(out_dir, m, s)) for s in seeds] for m in config.methods
    }
    write_aggregate(out_dir / "aggregate.csv", aggregate_traces(traces, budget))
    return summaries


def _step_values(rows, grid):
    """Incumbent on the grid: linear interpolation, NaN before the first row, carried after the last."""
    if not rows:
        return np.full(grid.size, np.nan)
    c = np.array([r["cumulative_cost"] for r in rows])
    y = np.array([r["incumbent_value"] for r in rows])
    out = np.interp(grid, c, y)
    out[grid < c[0]] = np.nan
    return out


def aggregate_traces(traces, budget, n_grid=N_GRID):
    """Mean and standard error of the incumbent on a common cost grid.

    ``traces`` maps method -> list of trace-row lists.  Values at each grid
    point are sorted before reduction, so the result does not depend on the
    order of seeds.
    """
    grid = np.linspace(0.0, budget, n_grid)
    out = []
    for method, runs in traces.items():
        V = np.array([_step_values(r, grid) for r in runs]).reshape(len(runs), n_grid)
        for j, c in enumerate(grid):
            v = np.sort(V[:, j][~np.isnan(V[:, j])])
            n = v.size
            mean = float(v.sum() / n) if n else float("nan")
            se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0 if n == 1 else float("nan")
            out.append({"method": method, "cost": float(c), "mean": mean, "stderr": se, "n_runs": n})
    return out


def write_aggregate(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=AGG_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in AGG_FIELDS})


def read_aggregate(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != AGG_FIELDS:
            raise ValueError(f"{path}: row 1: expected header {AGG_FIELDS}")
        for i, r in enumerate(reader, start=2):
            try:
                rows.append({
                    "method": r["method"], "cost": float(r["cost"]), "mean": float(r["mean"]),
                    "stderr": float(r["stderr"]), "n_runs": int(r["n_runs"]),
                })
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from exc
    return rows


def emit_plot(aggregate_csv, out_path):
    """Mean line and standard-error band per method, saved as SVG."""
    rows = read_aggregate(aggregate_csv)
    if not rows:
        raise ValueError(f"{aggregate_csv}: aggregate is empty")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "budgetbo"
    methods = list(dict.fromkeys(r["method"] for r in rows))
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        c = np.array([r["cost"] for r in sel])
        mu = np.array([r["mean"] for r in sel])
        se = np.nan_to_num(np.array([r["stderr"] for r in sel]))
        (line,) = ax.plot(c, mu, label=m)
        ax.fill_between(c, mu - se, mu + se, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("cost")
    ax.set_ylabel("incumbent value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(out_path)


def default_output_dir():
    return os.environ.get("BUDGETBO_OUT", "runs")
