"""Backend selection for the convolution unfold kernels.

The compiled extension ``wmfm.diffcore._kernels`` is used when it imports
and the ``WMFM_PURE_PYTHON`` environment variable is unset; otherwise the
numpy implementation in ``_kernels_py`` is used. Both produce identical
layouts, so callers never need to know which one is active.
"""

import os

from . import _kernels_py

BACKEND = "python"
im2col = _kernels_py.im2col
col2im = _kernels_py.col2im

if not os.environ.get("WMFM_PURE_PYTHON"):
    try:
        from . import _kernels as _ext
    except ImportError:  # extension not built
        _ext = None
    if _ext is not None:
        BACKEND = "compiled"
        im2col = _ext.im2col
        col2im = _ext.col2im

out_size = _kernels_py.out_size

__all__ = ["BACKEND", "im2col", "col2im", "out_size"]
