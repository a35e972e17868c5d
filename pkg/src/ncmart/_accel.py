"""Backend selection for the hot numeric kernels.

Kernels in :mod:`ncmart._kernels` are written as plain numpy loops and get
compiled with numba's ``@njit`` by default.  Setting the environment variable
``NCMART_NUMBA=0`` (before import) keeps them as pure-Python/numpy functions,
which is slower but bit-for-bit follows the same algorithm.  The benchmark
script ``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

_flag = os.environ.get("NCMART_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _flag not in ("0", "false", "off", "no")

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def maybe_njit(func):
    """Jit-compile ``func`` unless the numpy fallback was requested."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func
