"""Compare the numba and pure-numpy kernel paths.

Runs the B-spline basis evaluation and the Lorenz-96 integrator through
whichever backend is active (set GRNGC_NUMBA=0 to force numpy), so invoke it
twice to get both columns:

    python3 benchmarks/bench_kernels.py
    GRNGC_NUMBA=0 python3 benchmarks/bench_kernels.py
"""
import time

import numpy as np

from grngc.kernels import backend_name, bspline_basis_kernel, lorenz96_trajectory
from grngc.splines import SplineSpec


def timeit(fn, repeats=5):
    fn()  # warm-up (includes jit compilation on the numba path)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    print(f"backend: {backend_name()}")
    spec = SplineSpec()
    knots = spec.knots()
    rng = np.random.default_rng(0)

    for n in (10_000, 100_000, 1_000_000):
        x = rng.uniform(spec.lo, spec.hi, n)
        for deriv in (0, 1):
            t = timeit(lambda: bspline_basis_kernel(x, knots, spec.degree, deriv))
            print(f"bspline_basis  n={n:>9,} deriv={deriv}: {t * 1e3:8.2f} ms")

    for p, steps in ((10, 2000), (100, 2000), (1000, 2000)):
        x0 = 10.0 + rng.normal(0, 0.01, p)
        t = timeit(lambda: lorenz96_trajectory(x0, 10.0, 0.05, steps))
        print(f"lorenz96_rk4   p={p:>5} steps={steps}: {t * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
