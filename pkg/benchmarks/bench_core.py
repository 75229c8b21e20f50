"""Time the compiled core against the pure-Python loops.

    python3 benchmarks/bench_core.py [--repeat 5] [--dim 12]
"""
import argparse
import time

import numpy as np

from budgetbo import _fallback

try:
    from budgetbo import _core
except ImportError:
    _core = None


def _problem(dim, n_sweeps, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((dim, dim))
    cov = A @ A.T / dim + 0.5 * np.eye(dim)
    prec = np.linalg.inv(cov)
    lower = np.full(dim, 0.0)
    upper = np.full(dim, np.inf)
    x0 = np.full(dim, 0.5)
    U = rng.random((n_sweeps, dim))
    return np.zeros(dim), prec, lower, upper, x0, U


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dim", type=int, default=12, help="constraint dimension for the Gibbs sampler")
    ap.add_argument("--sweeps", type=int, default=2000)
    ap.add_argument("--q", type=int, default=4, help="batch size for the q-EI reduction")
    ap.add_argument("--n-mc", type=int, default=4096)
    args = ap.parse_args(argv)

    mean, prec, lo, hi, x0, U = _problem(args.dim, args.sweeps)
    rng = np.random.default_rng(1)
    A = rng.standard_normal((args.q, args.q))
    chol = np.linalg.cholesky(A @ A.T + np.eye(args.q))
    base = rng.standard_normal((args.n_mc, args.q))
    mu = rng.standard_normal(args.q)

    cases = {
        "gibbs_tmvn": lambda mod: (lambda: mod.gibbs_tmvn(mean, prec, lo, hi, x0, U, 100, 5)),
        "qei_reduce": lambda mod: (lambda: mod.qei_reduce(mu, chol, base, 0.5)),
    }
    print(f"{'kernel':12s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}  agree")
    for name, make in cases.items():
        t_py, r_py = _time(make(_fallback), args.repeat)
        if _core is None:
            print(f"{name:12s} {1e3 * t_py:12.2f} {'n/a':>12s} {'':>8s}  (extension not built)")
            continue
        t_cy, r_cy = _time(make(_core), args.repeat)
        same = np.array_equal(np.asarray(r_py), np.asarray(r_cy)) or np.allclose(r_py, r_cy, rtol=1e-12, atol=0)
        print(f"{name:12s} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.1f}  {same}")


if __name__ == "__main__":
    main()
