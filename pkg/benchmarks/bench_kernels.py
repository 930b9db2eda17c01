"""Time the compiled lattice kernels against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--points 2000] [--models 4] [--repeat 5]

Shapes mirror a side-information run at the default grid: a few thousand
source points, a handful of models, unit-variance noise on a 0.02 lattice.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from zdjscc import _kernels_py

try:
    from zdjscc import _kernels
except ImportError:  # extension not built
    _kernels = None


def _inputs(n_points: int, n_models: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    dy, sigma, radius = 0.02, 1.0, 5.0
    gvals = rng.uniform(-20.0, 20.0, size=(n_models, n_points))
    assoc = rng.dirichlet(np.ones(n_models), size=n_points).T.copy()
    first = int(np.floor((-20.0 - radius) / dy)) - 1
    n_rows = int(np.ceil(2 * (20.0 + radius) / dy)) + 4
    table = rng.standard_normal((n_rows, n_points))
    return gvals, assoc, dy, sigma, radius, first, n_rows, table


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--models", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    g, p, dy, sigma, radius, first, n_rows, table = _inputs(args.points, args.models)
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels

    results = {}
    for name, mod in backends.items():
        results[name] = (
            _time(lambda: mod.channel_matrix(g, p, dy, sigma, radius, first, n_rows), args.repeat),
            _time(lambda: mod.smoothed_interp(table, g, dy, sigma, radius, first), args.repeat),
        )

    print(f"points={args.points} models={args.models} lattice rows={n_rows}")
    print(f"{'backend':<8} {'channel_matrix (s)':>20} {'smoothed_interp (s)':>20}")
    for name, (cm, si) in results.items():
        print(f"{name:<8} {cm:>20.4f} {si:>20.4f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup  {py[0] / cy[0]:>20.1f} {py[1] / cy[1]:>20.1f}")
        ref = _kernels_py.channel_matrix(g, p, dy, sigma, radius, first, n_rows)
        fast = _kernels.channel_matrix(g, p, dy, sigma, radius, first, n_rows)
        print(f"max |difference| in channel_matrix: {np.max(np.abs(ref - fast)):.2e}")
    else:
        print("compiled extension not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
