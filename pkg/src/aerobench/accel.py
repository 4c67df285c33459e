"""Optional numba acceleration for the hot numeric kernels.

Set ``AEROBENCH_DISABLE_NUMBA=1`` to force the pure numpy/Python fallback
path (same source functions, undecorated).  ``benchmarks/kernel_bench.py``
compares the two paths.
"""

import os

_DISABLED = os.environ.get("AEROBENCH_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    NUMBA_AVAILABLE = False

JIT_ENABLED = NUMBA_AVAILABLE and not _DISABLED


def maybe_njit(func=None, **options):
    """``numba.njit`` when enabled, identity decorator otherwise.

    Jitted functions keep the original python implementation reachable via
    ``.py_func``; use :func:`python_impl` to get it either way.
    """

    def wrap(f):
        if JIT_ENABLED:
            return _njit(cache=True, **options)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def python_impl(func):
    """The undecorated python implementation behind a (possibly) jitted function."""
    return getattr(func, "py_func", func)
