"""JIT switch for the hot kernels.

Kernels are written as plain Python/numpy and compiled with numba when it is
importable. Set ``PENBOOT_DISABLE_NUMBA=1`` to run the pure-numpy path.
"""
import os

_DISABLED = os.environ.get("PENBOOT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba
except ImportError:
    numba = None

USE_NUMBA = numba is not None


def jit(func):
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend():
    return "numba" if USE_NUMBA else "numpy"
