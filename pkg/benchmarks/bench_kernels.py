"""Time the banded spline kernels and a full smoother fit.

Run with ``python benchmarks/bench_kernels.py [m ...]``.  Compares the
compiled and pure-Python backends on the same penalized system.
"""
import sys
import timeit

import numpy as np

from gamlsskit import _spline_py
from gamlsskit._kernels import BACKEND, band_solve, band_trace
from gamlsskit.smoothers import KnotGrid, edf_to_lambda, fit_cubic_spline


def system(m, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 1, m))
    grid = KnotGrid(x)
    W = grid.aggregate(rng.uniform(0.5, 2.0, m))
    G = grid.gram(W)
    rhs = rng.normal(size=grid.K)
    return grid, G, rhs


def bench(m, repeat=5):
    grid, G, rhs = system(m)
    O = grid.penalty
    lam = 1e-3
    rows = []
    for name, solve, trace in (
        (BACKEND, band_solve, band_trace),
        ("python", _spline_py.band_solve, _spline_py.band_trace),
    ):
        number = 1 if name == "python" and m > 2000 else 5
        ts = min(timeit.repeat(lambda: solve(G, O, rhs, lam), number=number, repeat=repeat)) / number
        tt = min(timeit.repeat(lambda: trace(G, O, lam), number=number, repeat=repeat)) / number
        rows.append((name, ts, tt))
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, m)
    y = np.sin(6 * x) + rng.normal(0, 0.3, m)
    w = np.ones(m)
    tf = min(timeit.repeat(lambda: fit_cubic_spline(x, y, w, edf_to_lambda(x, w, 8.0)), number=1, repeat=repeat))
    return rows, tf


def main(argv):
    sizes = [int(a) for a in argv] or [200, 2000, 20000]
    print(f"{'m':>7}  {'backend':>8}  {'solve [ms]':>11}  {'trace [ms]':>11}")
    for m in sizes:
        rows, tf = bench(m)
        for name, ts, tt in rows:
            print(f"{m:>7}  {name:>8}  {1e3 * ts:>11.3f}  {1e3 * tt:>11.3f}")
        print(f"{m:>7}  {'edf=8 fit':>8}  {1e3 * tf:>11.3f}")


if __name__ == "__main__":
    main(sys.argv[1:])
