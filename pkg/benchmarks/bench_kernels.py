#!/usr/bin/env python3
"""Side-by-side timing of the numpy and numba kernels.

Run from the repository root:

    python benchmarks/bench_kernels.py            # default sizes
    python benchmarks/bench_kernels.py --n 20000 --k 20

Both backends are imported regardless of ``YFWL_DISABLE_NUMBA``; outputs are
checked against each other before timing is reported.
"""

import argparse
import time

import numpy as np

from yfwl import _kernels


def best_of(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=5000)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--k2", type=int, default=8)
    parser.add_argument("--lags", type=int, default=8)
    parser.add_argument("--clusters", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _kernels.numba_kernels is None:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    n, k, k2 = args.n, args.k, args.k2
    x = rng.standard_normal((n, k))
    w2 = rng.standard_normal((n, k2))
    d = rng.uniform(0.1, 2.0, n)
    m = np.cov(x, rowvar=False)
    m2 = np.cov(w2, rowvar=False)
    cross = rng.standard_normal((k2, k)) * 0.01
    weights = 1.0 - np.arange(args.lags + 1) / (args.lags + 1.0)
    codes = rng.integers(0, args.clusters, n).astype(np.int64)

    cases = {
        "weighted_gram": (x, d),
        "row_quadratic": (x, m),
        "block_leverage": (w2, x, m2, cross, m),
        "hac_meat": (x, weights),
        "cluster_meat": (x, codes, args.clusters),
    }

    print("compiling numba kernels...")
    t0 = time.perf_counter()
    _kernels.warmup()
    print(f"JIT warmup: {time.perf_counter() - t0:.2f}s  (active backend: {_kernels.BACKEND})\n")

    print(f"N={n} k={k} k2={k2} L={args.lags} G={args.clusters}")
    print(f"{'kernel':<16}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}{'max|diff|':>12}")
    print("-" * 62)
    for name, case in cases.items():
        t_np, out_np = best_of(getattr(_kernels.numpy_kernels, name), case, args.repeats)
        t_nb, out_nb = best_of(getattr(_kernels.numba_kernels, name), case, args.repeats)
        diff = float(np.max(np.abs(out_np - out_nb)))
        print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.2f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
