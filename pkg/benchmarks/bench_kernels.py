"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Both
backends are called on identical inputs and their outputs are compared
before timing.
"""

import argparse
import timeit

import numpy as np

from condrisk import kernels
from condrisk.spatial import pairwise_distances


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    locs = rng.uniform(size=(n, 2))
    H = np.array([[0.25, 0.01], [0.01, 0.3]])
    hinv = np.linalg.inv(H)
    det_h = float(np.linalg.det(H))
    d = pairwise_distances(locs)[np.triu_indices(n, 1)]
    lags, inv = np.unique(np.round(d, 12), return_inverse=True)
    counts = np.bincount(inv).astype(float)
    sums = np.bincount(inv, weights=rng.chisquare(1, size=len(d)) * 2)
    queries = np.linspace(0.0, lags[-1], 100)
    return locs, hinv, det_h, lags, counts, sums, queries


def bench(n, repeat):
    locs, hinv, det_h, lags, counts, sums, queries = _inputs(n)
    cases = {
        "local_linear_weights": lambda b: b.local_linear_weights(
            locs, locs, hinv, det_h, kernels.TRIWEIGHT),
        "lag_moments": lambda b: b.lag_moments(
            lags, counts, sums, queries, 0.1, kernels.TRIWEIGHT),
    }
    rows = []
    for name, call in cases.items():
        py = kernels.python_backend
        cy = kernels.compiled_backend
        t_py = min(timeit.repeat(lambda: call(py), number=1, repeat=repeat))
        if cy is None:
            rows.append((name, n, t_py, np.nan, np.nan))
            continue
        a, b = call(py), call(cy)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, rtol=1e-9, atol=1e-12)
        t_cy = min(timeit.repeat(lambda: call(cy), number=1, repeat=repeat))
        rows.append((name, n, t_py, t_cy, t_py / t_cy))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="100,225,400,900")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled_backend is None:
        print("compiled extension not built; timing the python backend only")
    print(f"{'kernel':<22}{'n':>6}{'python [ms]':>14}{'compiled [ms]':>15}{'speedup':>9}")
    for n in map(int, args.sizes.split(",")):
        for name, size, t_py, t_cy, ratio in bench(n, args.repeat):
            print(f"{name:<22}{size:>6}{1e3 * t_py:>14.2f}{1e3 * t_cy:>15.2f}{ratio:>9.1f}")


if __name__ == "__main__":
    main()
