"""Backend selection for the hot loops.

Set ``SGBH_DISABLE_NUMBA=1`` to force the pure-numpy path. The numba path is
used whenever numba imports cleanly and the flag is unset.
"""

import os

_FLAG = os.environ.get("SGBH_DISABLE_NUMBA", "").strip().lower()

try:  # pragma: no cover - exercised implicitly by whichever backend is live
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA = _numba is not None and _FLAG not in {"1", "true", "yes", "on"}

JIT_OPTIONS = {"nogil": True, "cache": True, "fastmath": False}


def njit(func):
    """Compile ``func`` with numba when available, otherwise return None."""
    if _numba is None:
        return None
    return _numba.njit(**JIT_OPTIONS)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
