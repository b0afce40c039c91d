"""Numba switch.

Set ``MSDCLASS_DISABLE_NUMBA=1`` to run every hot kernel through its
pure-numpy implementation instead of the compiled one. The flag is read
once at import time.
"""

import os

NUMBA_OPTS = {"cache": True, "nogil": True}

_disabled = os.environ.get("MSDCLASS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not _disabled


def njit(func):
    """Compile ``func`` in nopython mode, or leave it as plain Python."""
    if numba is None:
        return func
    return numba.njit(func, **NUMBA_OPTS)
