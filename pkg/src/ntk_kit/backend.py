"""Selects the implementation of the hot depth-iteration loops.

Two interchangeable backends exist for every kernel in ``_kernels``:

* ``numba``  -- scalar loops compiled with ``@njit`` (per-element early exit),
* ``numpy``  -- vectorized array sweeps, no compilation step.

The active one is chosen at import time from the ``NTK_KIT_BACKEND``
environment variable: ``numba``, ``numpy``, or ``auto`` (default; numba when
importable).  Both backends are importable side by side regardless of the
flag, which is what ``benchmarks/bench_backends.py`` relies on.
"""

from __future__ import annotations

import os

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        """No-op stand-in so `@njit` decorated sources stay importable."""

        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_VALID = ("auto", "numba", "numpy")


def _resolve(flag: str) -> bool:
    flag = flag.strip().lower()
    if flag not in _VALID:
        raise ValueError(
            f"NTK_KIT_BACKEND must be one of {_VALID}, got {flag!r}"
        )
    if flag == "numpy":
        return False
    if flag == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("NTK_KIT_BACKEND=numba but numba is not importable")
        return True
    return HAS_NUMBA


USE_NUMBA = _resolve(os.environ.get("NTK_KIT_BACKEND", "auto"))


def active_backend() -> str:
    """Name of the backend the public API dispatches to."""
    return "numba" if USE_NUMBA else "numpy"


def set_threads(k: int | None) -> int | None:
    """Cap the compiled backend's thread pool; returns the applied value.

    The numpy backend has no pool of its own (BLAS settings are the runtime's
    business), so the request is a recorded no-op there.
    """
    if k is None or not USE_NUMBA:
        return None
    import numba

    applied = max(1, min(int(k), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(applied)
    return applied
