"""Problem backends: a synthetic iterative learner and a tabular curve store.

Both expose the same training contract used by the optimizer::

    backend.train(x, start_epoch, end_epoch) -> [(epoch, value, incremental_cost), ...]

which resumes config ``x`` (normalized coordinates) from ``start_epoch`` and
reports every epoch in ``start_epoch + 1 .. end_epoch``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import NotFoundError, ParameterDomainError

__all__ = ["SyntheticProblem", "CurveTable", "synth_eval", "table_eval"]

_FIELDS = ("asymptote", "rate", "slope", "overhead", "midpoint")
_N_TERMS = 4


def _hash_coords(x):
    digest = hashlib.blake2b(np.ascontiguousarray(x, dtype=np.float64).tobytes(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


@dataclass(frozen=True)
class SyntheticProblem:
    """Deterministic learner with monotone learning curves and linear costs.

    Every per-configuration quantity is a smooth field ``u(x)`` in ``[0, 1]``
    built from a few cosines of random projections of ``x``:

    * asymptote ``y_inf = 0.2 + 0.75 u_y``
    * time constant ``lam = t_max (0.04 + 0.3 v)`` (exponential) or
      ``t_max (0.03 + 0.12 v)`` (logistic, with midpoint
      ``t_max (0.1 + 0.5 u_m)``), where ``v = 0.6 u_y + 0.4 u_r`` so that
      good configurations learn more slowly
    * cost ``c(x, t) = a t + b`` with ``a = 0.5 + 2.5 (u_y + u_a) / 2`` and
      ``b = 2 + 6 u_b``; good configurations tend to be expensive.
      ``cost_profile="constant"`` uses ``a = 1, b = 2`` everywhere.

    Observation noise is drawn per ``(seed, x, t)`` from a hash of the
    arguments, so results do not depend on evaluation order.
    """

    dim: int = 3
    t_max: int = 30
    family: str = "exponential"
    noise: float = 0.0
    seed: int = 0
    cost_profile: str = "heterogeneous"
    _basis: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in ("exponential", "logistic"):
            raise ParameterDomainError(f"unknown curve family {self.family!r}")
        if self.cost_profile not in ("heterogeneous", "constant"):
            raise ParameterDomainError(f"unknown cost profile {self.cost_profile!r}")
        if self.dim < 1 or self.t_max < 1 or self.noise < 0:
            raise ParameterDomainError("dim and t_max must be >= 1, noise >= 0")
        rng = np.random.default_rng([self.seed, 7919])
        basis = {}
        for name in _FIELDS:
            W = rng.normal(size=(_N_TERMS, self.dim))
            W /= np.linalg.norm(W, axis=1, keepdims=True)
            basis[name] = (
                W,
                rng.uniform(0.4, 1.2, _N_TERMS),
                rng.uniform(0.0, 2.0 * np.pi, _N_TERMS),
                rng.uniform(0.5, 1.0, _N_TERMS),
            )
        object.__setattr__(self, "_basis", basis)

    def _field(self, name, x):
        W, freq, phase, coef = self._basis[name]
        s = np.cos(2.0 * np.pi * freq * (np.atleast_2d(x) @ W.T) + phase) @ coef
        return 0.5 + 0.5 * s / coef.sum()

    def _check(self, x, t=None):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim or not np.all(np.isfinite(x)):
            raise ParameterDomainError(f"config must have {self.dim} finite coordinates")
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise ParameterDomainError("config outside the unit cube")
        if t is not None and not (1 <= t <= self.t_max):
            raise ParameterDomainError(f"epoch {t} outside [1, {self.t_max}]")
        return x

    def asymptote(self, x):
        return 0.2 + 0.75 * self._field("asymptote", x)

    def time_constant(self, x):
        lo, span = (0.04, 0.3) if self.family == "exponential" else (0.03, 0.12)
        # better configs tend to learn more slowly
        u = 0.6 * self._field("asymptote", x) + 0.4 * self._field("rate", x)
        return self.t_max * (lo + span * u)

    def midpoint(self, x):
        return self.t_max * (0.1 + 0.5 * self._field("midpoint", x))

    def slope(self, x):
        if self.cost_profile == "constant":
            return np.ones(np.atleast_2d(x).shape[0])
        return 0.5 + 2.5 * 0.5 * (self._field("asymptote", x) + self._field("slope", x))

    def overhead(self, x):
        if self.cost_profile == "constant":
            return np.full(np.atleast_2d(x).shape[0], 2.0)
        return 2.0 + 6.0 * self._field("overhead", x)

    def clean_value(self, x, t):
        """Noise-free objective; vectorized over rows of ``x`` and ``t``."""
        y_inf = self.asymptote(x)
        lam = self.time_constant(x)
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return y_inf * (1.0 - np.exp(-t / lam))
        return y_inf / (1.0 + np.exp(-(t - self.midpoint(x)) / lam))

    def value(self, x, t):
        x = self._check(x, t)
        y = float(self.clean_value(x, t)[0])
        if self.noise > 0:
            rng = np.random.default_rng([self.seed, _hash_coords(x), int(t)])
            y += self.noise * float(rng.standard_normal())
        return y

    def cost(self, x, t):
        """Cumulative cost of training ``x`` from scratch to epoch ``t`` (0 at t=0)."""
        x = self._check(x)
        if t <= 0:
            return 0.0
        return float(self.slope(x)[0] * t + self.overhead(x)[0])

    def train(self, x, start, end):
        x = self._check(x)
        if not (0 <= start < end <= self.t_max):
            raise ParameterDomainError(f"bad epoch range ({start}, {end}]")
        out = []
        prev = self.cost(x, start)
        for t in range(start + 1, end + 1):
            c = self.cost(x, t)
            out.append((t, self.value(x, t), c - prev))
            prev = c
        return out

    candidates = None

    def full_cost_estimate(self, n=256):
        """Mean cost of a full ``t_max`` run over a fixed low-discrepancy sample."""
        from scipy.stats import qmc

        X = qmc.Sobol(self.dim, scramble=True, seed=12345).random(n)
        return float(np.mean(self.slope(X) * self.t_max + self.overhead(X)))

    def best_value(self, n_grid=4096):
        """Best asymptote on a dense low-discrepancy grid (reference optimum)."""
        from scipy.stats import qmc

        X = qmc.Sobol(self.dim, scramble=True, seed=54321).random(n_grid)
        return float(np.max(self.clean_value(X, self.t_max)))


def synth_eval(problem, x, t):
    """(value, cumulative cost) of ``x`` trained to epoch ``t``."""
    return problem.value(x, t), problem.cost(x, t)


@dataclass
class CurveTable:
    """Precomputed learning curves for a finite set of configurations.

    ``values[i, t - 1]`` and ``costs[i, t - 1]`` hold the objective and the
    cumulative cost of config ``i`` after ``t`` epochs.
    """

    config_ids: list
    raw: np.ndarray
    values: np.ndarray
    costs: np.ndarray
    hp_names: list
    ranges: list
    log_scale: list = None

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.costs = np.asarray(self.costs, dtype=float)
        n, d = self.raw.shape
        if self.log_scale is None:
            self.log_scale = [False] * d
        if len(self.config_ids) != n or self.values.shape != self.costs.shape or self.values.shape[0] != n:
            raise ValueError("inconsistent table shapes")
        if np.any(np.diff(self.costs, axis=1) < 0):
            raise ValueError("cumulative costs must be non-decreasing in epoch")
        self._index = {cid: i for i, cid in enumerate(self.config_ids)}
        self.coords = self.normalize(self.raw)

    @property
    def dim(self):
        return self.raw.shape[1]

    @property
    def t_max(self):
        return self.values.shape[1]

    @property
    def candidates(self):
        return self.coords

    def normalize(self, raw):
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        out = np.empty_like(raw)
        for j, ((lo, hi), log) in enumerate(zip(self.ranges, self.log_scale)):
            v, lo_, hi_ = raw[:, j], lo, hi
            if log:
                v, lo_, hi_ = np.log(v), math.log(lo), math.log(hi)
            out[:, j] = (v - lo_) / (hi_ - lo_) if hi_ > lo_ else 0.0
        return out

    def row_of(self, x):
        x = np.asarray(x, dtype=float)
        hits = np.flatnonzero(np.all(np.abs(self.coords - x) <= 1e-9, axis=1))
        if hits.size == 0:
            raise NotFoundError(f"no table config at {x.tolist()}")
        return int(hits[0])

    def lookup(self, config_id, t):
        if config_id not in self._index:
            raise NotFoundError(f"unknown config id {config_id!r}")
        if not (1 <= t <= self.t_max):
            raise NotFoundError(f"epoch {t} not in table (t_max={self.t_max})")
        i = self._index[config_id]
        return float(self.values[i, t - 1]), float(self.costs[i, t - 1])

    def train(self, x, start, end):
        i = self.row_of(x)
        if not (0 <= start < end <= self.t_max):
            raise NotFoundError(f"bad epoch range ({start}, {end}]")
        out = []
        prev = 0.0 if start == 0 else self.costs[i, start - 1]
        for t in range(start + 1, end + 1):
            c = self.costs[i, t - 1]
            out.append((t, float(self.values[i, t - 1]), float(c - prev)))
            prev = c
        return out

    def full_cost_estimate(self):
        return float(self.costs[:, -1].mean())

    def best_value(self):
        return float(self.values.max())

    # --- file format -------------------------------------------------------
    def write(self, path):
        path = Path(path)
        d = self.dim
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config_id", *[f"hp_{j + 1}" for j in range(d)], "epoch", "value", "cumulative_cost"])
            for i, cid in enumerate(self.config_ids):
                hp = [repr(float(v)) for v in self.raw[i]]
                for t in range(1, self.t_max + 1):
                    w.writerow([cid, *hp, t, repr(float(self.values[i, t - 1])), repr(float(self.costs[i, t - 1]))])
        meta = {
            "d": d,
            "t_max": self.t_max,
            "hp_names": list(self.hp_names),
            "ranges": [[float(lo), float(hi)] for lo, hi in self.ranges],
            "log_scale": [bool(v) for v in self.log_scale],
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        d, t_max = int(meta["d"]), int(meta["t_max"])
        order, raw, vals, costs = [], {}, {}, {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = ["config_id", *[f"hp_{j + 1}" for j in range(d)], "epoch", "value", "cumulative_cost"]
            if header != expected:
                raise ValueError(f"unexpected header {header}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != d + 4:
                    raise ValueError(f"row {lineno}: expected {d + 4} fields")
                cid = row[0]
                t = int(row[d + 1])
                if not 1 <= t <= t_max:
                    raise ValueError(f"row {lineno}: epoch {t} outside [1, {t_max}]")
                if cid not in raw:
                    order.append(cid)
                    raw[cid] = [float(v) for v in row[1 : d + 1]]
                    vals[cid] = np.full(t_max, np.nan)
                    costs[cid] = np.full(t_max, np.nan)
                vals[cid][t - 1] = float(row[d + 2])
                costs[cid][t - 1] = float(row[d + 3])
        V = np.array([vals[c] for c in order])
        C = np.array([costs[c] for c in order])
        if np.isnan(V).any() or np.isnan(C).any():
            raise ValueError("table is missing epochs for some configs")
        return cls(
            order, np.array([raw[c] for c in order]), V, C,
            meta.get("hp_names", [f"hp_{j + 1}" for j in range(d)]),
            [tuple(r) for r in meta["ranges"]], meta.get("log_scale"),
        )

    @classmethod
    def from_problem(cls, problem, n_configs=64, seed=0):
        """Tabulate a synthetic problem on ``n_configs`` random configurations."""
        rng = np.random.default_rng(seed)
        X = rng.random((n_configs, problem.dim))
        ts = range(1, problem.t_max + 1)
        V = np.array([[problem.value(x, t) for t in ts] for x in X])
        C = np.array([[problem.cost(x, t) for t in ts] for x in X])
        ids = [f"c{i:04d}" for i in range(n_configs)]
        names = [f"x{j}" for j in range(problem.dim)]
        return cls(ids, X, V, C, names, [(0.0, 1.0)] * problem.dim)


def table_eval(table, config_id, t):
    return table.lookup(config_id, t)
