#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-numpy kernel sweeps.

Both implementations are importable regardless of the NTK_KIT_BACKEND flag,
so this script times them side by side and cross-checks their outputs.
Usage: python benchmarks/bench_backends.py [n_points]
"""

import sys
import time

import numpy as np

from ntk_kit import backend
from ntk_kit import _kernels as K

CUBIC = np.array([0.0, 0.5, 0.0, 0.5])  # vanishing-mean cubic dual, B' = 2
HERMITE2 = np.array([0.0, 0.0, 1.0])


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    rng = np.random.default_rng(0)
    z = rng.uniform(0.01, 1.0 - 1e-6, n)
    dc = K._deriv_coeffs(CUBIC)
    rho = K._rho_coeffs(CUBIC)
    dc2 = K._deriv_coeffs(HERMITE2)

    cases = [
        (
            "ntk depth=100",
            lambda: K._ntk_series_nb(CUBIC, dc, z, 100),
            lambda: K._ntk_series_np(CUBIC, dc, z, 100),
        ),
        (
            "psi product rtol=1e-12",
            lambda: K._psi_product_nb(CUBIC, rho, z, 1e-12, 100_000)[0],
            lambda: K._psi_product_np(CUBIC, rho, z, 1e-12, 100_000)[0],
        ),
        (
            "log-ntk depth=500",
            lambda: K._log_ntk_series_nb(HERMITE2, dc2, 2, z, 500),
            lambda: K._log_ntk_series_np(HERMITE2, dc2, 2, z, 500),
        ),
    ]

    print(f"n = {n} points, numba available: {backend.HAS_NUMBA}")
    if not backend.HAS_NUMBA:
        print("(the 'numba' column below is the undecorated python fallback; "
              "expect it to lose badly)")
    print(f"{'kernel':<24} {'numba':>10} {'numpy':>10} {'speedup':>8}  max rel diff")
    for name, f_nb, f_np in cases:
        f_nb()  # jit warm-up outside the timed region
        t_nb = best_of(f_nb)
        t_np = best_of(f_np)
        a, b = f_nb(), f_np()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
        diff = float(np.nanmax(np.abs(a - b) / denom))
        print(
            f"{name:<24} {1e3 * t_nb:>8.1f}ms {1e3 * t_np:>8.1f}ms "
            f"{t_np / t_nb:>7.1f}x  {diff:.3e}"
        )


if __name__ == "__main__":
    main()
