"""Optional numba acceleration.

Set ``LEVY_EM_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
path. The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("LEVY_EM_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, identity otherwise."""
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func
    return _njit(*args, **kwargs)


def backend():
    return "numba" if HAS_NUMBA else "numpy"
