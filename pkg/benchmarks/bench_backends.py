#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy/Python fallback.

Run from the repository root after building the extension:

    python benchmarks/bench_backends.py
"""

import argparse
import time

import numpy as np

from robustae._kernels import available_backends
from robustae.numkit import Rng


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_fill_uniform(backends, count, repeats):
    rows = []
    for name, kern in backends.items():
        state = Rng(7)._state.copy()
        out = np.empty(count)
        seconds = _time(lambda: kern.fill_uniform(state, out), repeats)
        rows.append((f"fill_uniform n={count:.0e}", name, seconds,
                     count / seconds / 1e6))
    return rows


def bench_jacobi(backends, size, repeats):
    rows = []
    base = Rng(11).normal((size, size))
    for name, kern in backends.items():
        def run():
            at = base.T.copy()
            vt = np.eye(size)
            kern.jacobi_rows(at, vt, 60, 1e-12)

        seconds = _time(run, repeats)
        rows.append((f"jacobi_svd {size}x{size}", name, seconds, None))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fill-count", type=int, default=5_000_000)
    parser.add_argument("--svd-sizes", type=int, nargs="+", default=[100, 200])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends available: {', '.join(sorted(backends))}\n")
    rows = []
    rows += bench_fill_uniform(backends, args.fill_count, args.repeats)
    for size in args.svd_sizes:
        rows += bench_jacobi(backends, size, max(1, args.repeats - 1))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'backend':<9} {'seconds':>9}  throughput")
    baseline = {}
    for kernel, backend, seconds, rate in rows:
        extra = f"{rate:7.0f} M/s" if rate else ""
        print(f"{kernel:<{width}}  {backend:<9} {seconds:9.4f}  {extra}")
        baseline.setdefault(kernel, {})[backend] = seconds
    print()
    for kernel, entries in baseline.items():
        if "compiled" in entries and "python" in entries:
            print(f"{kernel}: compiled is {entries['python'] / entries['compiled']:.1f}x "
                  f"faster than the pure fallback")


if __name__ == "__main__":
    main()
