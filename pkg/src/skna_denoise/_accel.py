"""Backend selection for the hot numeric kernels.

``SKNA_DENOISE_BACKEND=numpy`` forces the pure-numpy fallbacks; the default
is ``numba`` whenever it imports.  The flag is read once at import time.
"""
from __future__ import annotations

import os

_requested = os.environ.get("SKNA_DENOISE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"SKNA_DENOISE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    bare = len(args) == 1 and callable(args[0])
    if _numba is None:
        return args[0] if bare else (lambda fn: fn)
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)
