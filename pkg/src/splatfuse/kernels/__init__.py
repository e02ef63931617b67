"""Backend selection for the compositing kernels.

The compiled Cython module is preferred; the numpy implementation is the
fallback. Set SPLATFUSE_KERNEL=python (or =compiled) to force a backend.
"""

import os

from . import compositing_py

_requested = os.environ.get("SPLATFUSE_KERNEL", "auto").lower()

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"SPLATFUSE_KERNEL must be auto, compiled or python, "
                     f"got {_requested!r}")

if _requested == "python":
    _impl = compositing_py
    BACKEND = "python"
else:
    try:
        from . import _compositing as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = compositing_py
        BACKEND = "python"

composite_forward = _impl.composite_forward
composite_backward = _impl.composite_backward
