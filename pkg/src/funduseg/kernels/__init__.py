"""Backend-dispatched numeric kernels (see funduseg.backend)."""

from .. import backend
from . import numpy_ops

_numba_ops = None


def get_ops():
    """Module implementing the kernel API for the active backend."""
    if backend.get_backend() == "numba":
        global _numba_ops
        if _numba_ops is None:
            from . import numba_ops

            _numba_ops = numba_ops
        return _numba_ops
    return numpy_ops


def conv2d_forward(x, w, b):
    return get_ops().conv2d_forward(x, w, b)


def conv2d_backward(x, w, dy):
    return get_ops().conv2d_backward(x, w, dy)


def maxpool2_forward(x):
    return get_ops().maxpool2_forward(x)


def maxpool2_backward(dy, idx):
    return get_ops().maxpool2_backward(dy, idx)


def upsample2_forward(x):
    return get_ops().upsample2_forward(x)


def upsample2_backward(dy):
    return get_ops().upsample2_backward(dy)


def laplacian_response(mask):
    return get_ops().laplacian_response(mask)
