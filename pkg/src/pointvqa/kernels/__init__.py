"""Hot sampling/grouping kernels with a compile-time and import-time choice.

The compiled Cython extension is preferred when it built successfully;
otherwise (or when POINTVQA_FORCE_PYTHON is set) the numpy fallback is used.
Both expose identical functions and agree index-for-index.
"""

import os

from . import _fallback

if os.environ.get("POINTVQA_FORCE_PYTHON"):
    _impl = _fallback
    IMPLEMENTATION = "python"
else:
    try:
        from . import _native as _impl
        IMPLEMENTATION = "native"
    except ImportError:
        _impl = _fallback
        IMPLEMENTATION = "python"

farthest_point_sample = _impl.farthest_point_sample
ball_query = _impl.ball_query

__all__ = ["farthest_point_sample", "ball_query", "IMPLEMENTATION"]
