"""Numba switch for the hot kernels.

Set ``FICTPLAY_DISABLE_NUMBA=1`` to force the pure-numpy path; numba is also
skipped when it cannot be imported.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("FICTPLAY_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is available, else return it."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)
