"""Numba switch for the hot oracle kernels.

Set ``MVRC_DISABLE_NUMBA=1`` (before import) to force the vectorised numpy
path even when numba is installed.
"""
import os

_DISABLED = os.environ.get("MVRC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED

# fastmath stays off: it lets LLVM reassociate sums and breaks index-order reductions
NUMBA_OPTS = {"cache": True, "nogil": True, "fastmath": False}


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(**NUMBA_OPTS)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
