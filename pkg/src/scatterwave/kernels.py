"""Selects the compiled convolution kernels when available.

Set ``SCATTERWAVE_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from ._ext import pykernels

BACKEND = "python"
_compiled = None

if os.environ.get("SCATTERWAVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ext import ckernels as _compiled

        BACKEND = "cython"
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else pykernels

im2col = _impl.im2col
col2im = _impl.col2im


def backends() -> dict:
    """Every importable implementation, keyed by name."""
    out = {"python": pykernels}
    if _compiled is not None:
        out["cython"] = _compiled
    else:
        try:
            from ._ext import ckernels

            out["cython"] = ckernels
        except ImportError:
            pass
    return out
