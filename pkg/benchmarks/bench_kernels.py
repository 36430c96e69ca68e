"""Compare the compiled and numpy kernel backends on simulation-sized batches.

Usage: python3 benchmarks/bench_kernels.py [--reps 5]
"""

import argparse
import time

import numpy as np

from strata_rd import kernels


def _time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    R, K, n, B = 1000, 30, 500, 200
    counts = rng.multinomial(n, np.full(4 * K, 1 / (4 * K)), size=R).reshape(R, K, 4)
    codes = rng.integers(0, 4 * K, size=n)
    idx = rng.integers(0, n, size=(B, n))
    delta = rng.uniform(-0.5, 0.5, size=K)

    print(f"{'kernel':<12}{'backend':<10}{'seconds':>10}")
    results = {}
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        for label, fn in (("summarize", lambda: be.summarize(counts)),
                          ("bootstrap", lambda: be.bootstrap(codes, K, idx, kernels.EST_MH, delta))):
            t = _time(fn, args.reps)
            results[(label, name)] = t
            print(f"{label:<12}{name:<10}{t:>10.4f}")
    if "compiled" in kernels.available_backends():
        for label in ("summarize", "bootstrap"):
            print(f"{label} speedup: {results[(label, 'python')] / results[(label, 'compiled')]:.1f}x")


if __name__ == "__main__":
    main()
