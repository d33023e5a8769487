"""Kernel backend selection.

The hot convolution kernels exist twice: a numba @njit version and a pure
numpy im2col version.  SEGKEY_BACKEND=numpy|numba picks one explicitly;
unset, numba is used when importable.  Resolved once at import time.
"""

from __future__ import annotations

import os


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend_name() -> str:
    choice = os.environ.get("SEGKEY_BACKEND", "").strip().lower()
    if choice not in ("", "numpy", "numba"):
        raise ValueError(f"SEGKEY_BACKEND must be 'numpy' or 'numba', got {choice!r}")
    if choice == "numba" and not _numba_available():
        raise ImportError("SEGKEY_BACKEND=numba but numba is not installed")
    if choice == "":
        choice = "numba" if _numba_available() else "numpy"
    return choice


BACKEND = resolve_backend_name()

if BACKEND == "numba":
    from .kernels_numba import conv2d_backward, conv2d_forward
else:
    from .kernels_numpy import conv2d_backward, conv2d_forward

__all__ = ["BACKEND", "conv2d_forward", "conv2d_backward", "resolve_backend_name"]
