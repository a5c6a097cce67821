"""Time the compiled and pure-numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--n 4096]
"""
import argparse
import time

import numpy as np

from pccomplete import kernels


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, (args.n, 3))
    other = rng.uniform(-0.5, 0.5, (args.n, 3))
    res = 224
    rows = rng.integers(0, res, args.n)
    cols = rng.integers(0, res, args.n)
    depth = rng.uniform(0.2, 1.2, args.n)

    cases = {
        "knn k=16": lambda: kernels.knn(pts, pts, 16),
        "nn_search": lambda: kernels.nn_search(pts, other),
        "fps m=n/4": lambda: kernels.fps(pts, args.n // 4),
        "splat r=1": lambda: kernels.splat_min(rows, cols, depth, res, res, 1),
    }
    backends = kernels.available_backends()
    prev = kernels.active_backend()
    results = {}
    try:
        for name in backends:
            kernels.use_backend(name)
            for case, fn in cases.items():
                results[case, name] = _best(fn, args.repeat)
    finally:
        kernels.use_backend(prev)

    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for case in cases:
        line = f"{case:<12}" + "".join(f"{results[case, b] * 1e3:>10.1f}ms" for b in backends)
        if "cython" in backends and "python" in backends:
            line += f"{results[case, 'python'] / results[case, 'cython']:>11.1f}x"
        print(line)
    if "cython" not in backends:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
