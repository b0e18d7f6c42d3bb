"""Backend selection for the compiled kernels.

Set ``DMCL_DISABLE_NUMBA=1`` to force the vectorised numpy implementations,
for instance when numba is unavailable or when debugging a kernel.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("DMCL_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by DMCL_DISABLE_NUMBA")
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba_njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when available, otherwise the identity decorator."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
