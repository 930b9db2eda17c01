"""Kernel dispatch: compiled extension when available, NumPy otherwise.

Set ``ZDJSCC_PURE_PYTHON=1`` to force the NumPy versions.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("ZDJSCC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

channel_matrix = _impl.channel_matrix
smoothed_interp = _impl.smoothed_interp

__all__ = ["BACKEND", "channel_matrix", "smoothed_interp"]
