"""Optional numba acceleration with a pure-numpy fallback.

The hot kernels ship in two equivalent implementations.  When numba is
importable the jitted path is used unless the environment variable
EQUIDECOMP_NO_NUMBA is set to a non-empty value, which forces the numpy
fallback.  Both paths do exact int64 arithmetic and produce bit-identical
arrays.
"""

from __future__ import annotations

import os

NO_NUMBA_ENV = "EQUIDECOMP_NO_NUMBA"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on install
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap


def use_numba() -> bool:
    """True when the jitted kernel path is active."""
    return HAS_NUMBA and not os.environ.get(NO_NUMBA_ENV)
