"""Numerical backend selection for the hot simulation kernels.

The inner stepping loops exist in two flavours: a numba ``@njit`` compiled
version and a vectorized pure-numpy fallback.  The active default is chosen
once at import time from the ``DERSIM_BACKEND`` environment variable:

    DERSIM_BACKEND=auto    use numba when importable, else numpy (default)
    DERSIM_BACKEND=numba   require numba, fail loudly if missing
    DERSIM_BACKEND=numpy   force the pure-numpy path

Individual calls can still override the default (the benchmark script does,
to time both paths in one process).
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    numba = None
    HAVE_NUMBA = False

_VALID = ("auto", "numba", "numpy")


def _resolve(env_value: str) -> str:
    value = env_value.strip().lower()
    if value not in _VALID:
        raise RuntimeError(
            f"DERSIM_BACKEND={env_value!r} is not one of {_VALID}")
    if value == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if value == "numba" and not HAVE_NUMBA:
        raise RuntimeError("DERSIM_BACKEND=numba but numba is not importable")
    return value


DEFAULT_BACKEND = _resolve(os.environ.get("DERSIM_BACKEND", "auto"))


def jit_compile(py_func):
    """Compile ``py_func`` with numba (nopython, on-disk cache)."""
    if not HAVE_NUMBA:  # pragma: no cover - guarded by callers
        raise RuntimeError("numba backend requested but numba is unavailable")
    return numba.njit(cache=True, fastmath=False)(py_func)
