"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Setting ``DARKPOOL_EQ_PURE=1`` forces the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
rate = _kernels_py.rate

if os.environ.get("DARKPOOL_EQ_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        rate = _compiled.rate
        BACKEND = "compiled"

__all__ = ["rate", "BACKEND"]
