"""Kernel backend selection.

The compiled extension ``rssicount._kernels`` is used when it imports;
otherwise the pure-Python implementations in ``rssicount._fallback`` are
used. Set ``RSSICOUNT_PURE=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("RSSICOUNT_PURE"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

window_stats = _impl.window_stats
prob_in_band = _impl.prob_in_band
segment = _impl.segment

__all__ = ["BACKEND", "window_stats", "prob_in_band", "segment"]
