"""JIT acceleration shim.

Hot numerical kernels are decorated with :func:`maybe_njit`. By default this
applies :func:`numba.njit` (with on-disk caching). Setting the environment
variable ``FLOWSCOPE_NO_NUMBA=1`` before import selects the pure
Python/numpy fallback path instead — same functions, no compilation. The
flag is read once at import time; both paths produce identical results
(``benchmarks/bench_kernels.py`` measures the speed difference).
"""

from __future__ import annotations

import os

#: True when the pure-Python fallback path is active.
NUMBA_DISABLED: bool = os.environ.get("FLOWSCOPE_NO_NUMBA", "").strip() in {
    "1",
    "true",
    "yes",
    "on",
}

if not NUMBA_DISABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dep, but degrade gracefully
        numba = None
        NUMBA_DISABLED = True
else:  # pragma: no cover - exercised via subprocess in tests/benchmarks
    numba = None


def maybe_njit(func):
    """Apply ``numba.njit(cache=True)`` unless the fallback path is active."""
    if NUMBA_DISABLED:
        return func
    return numba.njit(cache=True)(func)
