"""Kernel dispatch: compiled extension when importable, else pure Python.

Set ``GLVORTEX_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("GLVORTEX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled

        BACKEND = "cython"
    except ImportError:  # extension not built
        _compiled = None
else:
    _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py

label4 = _impl.label4
network_simplex = _impl.network_simplex

__all__ = ["BACKEND", "label4", "network_simplex"]
