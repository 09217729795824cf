"""Select the compiled kernels when available.

Set ``QDISS_BACKEND=python`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("QDISS_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"


def get(name: str):
    """Kernel module for ``name`` in {"compiled", "python"}."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
