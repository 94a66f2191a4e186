"""Optional numba acceleration for the hot kernels.

Set ``FORCEPOUR_DISABLE_NUMBA=1`` to run every kernel as plain numpy. The
flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("FORCEPOUR_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in {"1", "true", "yes", "on"}


def jit(fn):
    """Compile ``fn`` with ``numba.njit`` when acceleration is enabled."""
    if not USE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return "numba" if USE_NUMBA else "numpy"
