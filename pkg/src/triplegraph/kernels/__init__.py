"""Hot kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``TRIPLEGRAPH_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("TRIPLEGRAPH_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def _rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape(-1, x.shape[-1])


def softmax_lastaxis(x):
    """Softmax along the last axis, max-shifted."""
    return _impl.softmax_rows(_rows(x)).reshape(np.shape(x))


def layer_norm_lastaxis(x, gain, bias, eps):
    """Layer norm along the last axis; returns ``(out, xhat, rstd)``.

    ``rstd`` keeps a trailing singleton axis so it broadcasts against ``x``.
    """
    shape = np.shape(x)
    out, xhat, rstd = _impl.layer_norm_rows(
        _rows(x),
        np.ascontiguousarray(gain, dtype=np.float64),
        np.ascontiguousarray(bias, dtype=np.float64),
        float(eps),
    )
    return out.reshape(shape), xhat.reshape(shape), rstd.reshape(shape[:-1] + (1,))


def iou_matrix(a):
    return _impl.iou_matrix(_rows(a))


def threshold_components(a, threshold):
    return _impl.threshold_components(_rows(a), float(threshold))


def get_backend(name):
    """Return the kernel namespace by name (``"compiled"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
