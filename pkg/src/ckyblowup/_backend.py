"""Kernel backend selection.

The compiled core is used when it imports; set CKYBLOWUP_BACKEND=python
to force the pure-Python kernels.
"""
from __future__ import annotations

import os

from . import _fallback


def _load_compiled():
    try:
        from . import _core
    except ImportError:
        return None
    return _core


_compiled = _load_compiled()


def available() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def kernels(name: str | None = None):
    """Return the kernel module for `name` ('compiled' or 'python'), or the default."""
    if name is None:
        name = os.environ.get("CKYBLOWUP_BACKEND", "").strip().lower() or None
    if name in ("python", "fallback"):
        return _fallback
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    return _compiled if _compiled is not None else _fallback


BACKEND = kernels().NAME
