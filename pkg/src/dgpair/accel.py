"""Numba acceleration switch.

Hot kernels in :mod:`dgpair.kernels` exist in two flavors: a numba
``@njit`` build and a pure-numpy build.  The numba build is used by
default; set ``DGPAIR_NO_NUMBA=1`` to force the numpy path (useful for
debugging, profiling comparisons, or machines where numba is broken).
Both paths run the same algorithm on the same pre-drawn random samples,
so switching does not change results.
"""

import os
import warnings

_flag = os.environ.get("DGPAIR_NO_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _flag not in ("1", "true", "yes")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        raise RuntimeError("numba is not installed")


if NUMBA_REQUESTED and not NUMBA_AVAILABLE:  # pragma: no cover
    warnings.warn("numba unavailable; falling back to pure-numpy kernels")

NUMBA_ENABLED = NUMBA_REQUESTED and NUMBA_AVAILABLE
