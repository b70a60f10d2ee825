#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is timed on a representative workload for every importable
backend; the jitted backend is warmed once so compilation is not billed
to the timing loop.
"""

import argparse
import time

import numpy as np

from domainfusion.kernels import available_backends


def gauss11():
    xs = np.arange(11) - 5
    k = np.exp(-(xs**2) / (2 * 1.5**2))
    return k / k.sum()


def workload_msssim(backend, rng):
    xs = rng.uniform(0, 255, size=(2000, 32, 32))
    ys = rng.uniform(0, 255, size=(2000, 32, 32))
    k = gauss11()
    c2 = (0.03 * 255) ** 2
    return lambda: backend.msssim_components(xs, ys, k, (0.01 * 255) ** 2, c2, c2 / 2, 3)


def workload_jacobi(backend, rng):
    m = rng.normal(size=(64, 64))
    a = m @ m.T
    return lambda: backend.jacobi_eigh(a, 1e-10, 100)


def workload_resize(backend, rng):
    planes = rng.uniform(0, 255, size=(1000, 32, 32))
    return lambda: backend.resize_bilinear(planes, 16, 16)


WORKLOADS = [
    ("msssim_components (2000 pairs, 32x32, 3 scales)", workload_msssim),
    ("jacobi_eigh (64x64 SPD)", workload_jacobi),
    ("resize_bilinear (1000 planes, 32->16)", workload_resize),
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = available_backends()
    names = [b.BACKEND_NAME for b in backends]
    print(f"backends: {', '.join(names)}")
    for title, factory in WORKLOADS:
        print(f"\n{title}")
        timings = {}
        for backend in backends:
            rng = np.random.default_rng(0)
            fn = factory(backend, rng)
            fn()  # warmup (and jit compile)
            best = min(
                _timed(fn) for _ in range(args.repeat)
            )
            timings[backend.BACKEND_NAME] = best
            print(f"  {backend.BACKEND_NAME:<6} {best * 1e3:10.2f} ms")
        if len(timings) == 2:
            ratio = timings["numpy"] / timings["numba"]
            print(f"  speedup numba vs numpy: {ratio:.2f}x")


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


if __name__ == "__main__":
    main()
