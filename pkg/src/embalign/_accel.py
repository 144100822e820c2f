"""Numba switch for the hot kernels.

Set ``EMBALIGN_DISABLE_JIT=1`` to force the pure-numpy fallbacks (useful for
debugging and for platforms without numba).  The flag is read once at import.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}

JIT_DISABLED = os.environ.get("EMBALIGN_DISABLE_JIT", "0").strip().lower() not in _FALSY

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_JIT = HAVE_NUMBA and not JIT_DISABLED


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is usable, else return it as-is."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


def pick(jitted, fallback):
    """Return the kernel selected by the env flag."""
    return jitted if USE_JIT else fallback
