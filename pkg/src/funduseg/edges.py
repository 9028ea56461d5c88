"""Edge extraction from binary masks with the 8-connected Laplacian kernel.

A foreground pixel is an edge exactly when the kernel response under
zero padding is non-zero, which for binary input means it has at least
one non-foreground 8-neighbor (pixels on the image border count, so
contours stay closed).
"""

import numpy as np

from . import kernels
from .raster import CUP, DISC, ChannelRole, LabelMask

# fixed 3x3 kernel: zero-sum, center weight 8
LAPLACIAN_KERNEL = np.array(
    [[-1, -1, -1],
     [-1, 8, -1],
     [-1, -1, -1]], dtype=np.int64
)


def _require_binary(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {m.shape}")
    if m.size and not ((m == 0) | (m == 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return m.astype(np.int64)


def convolve_laplacian(mask: np.ndarray) -> np.ndarray:
    """Exact integer Laplacian response of a binary plane, zero-padded by 1."""
    return kernels.laplacian_response(_require_binary(mask))


def extract_edges(mask: np.ndarray) -> np.ndarray:
    """Binary boundary plane: foreground pixels with a non-zero response."""
    m = _require_binary(mask)
    t = kernels.laplacian_response(m)
    return ((t != 0) & (m == 1)).astype(np.uint8)


def edges_for_class(mask: LabelMask, class_id: int, include_interior_classes: bool = True) -> np.ndarray:
    """Boundary of one class's region in a label mask.

    For the disc with include_interior_classes set (the default), cup pixels
    count as disc so the result is the outer clinical disc boundary; without
    it the inner disc/cup boundary shows up as well.
    """
    if class_id not in (DISC, CUP):
        raise ValueError(f"class_id must be 1 (disc) or 2 (cup), got {class_id}")
    plane = mask.labels == class_id
    if class_id == DISC and include_interior_classes:
        plane |= mask.labels == CUP
    return extract_edges(plane.astype(np.int64))


def edge_role_plane(mask: LabelMask, role: ChannelRole) -> np.ndarray:
    if role == ChannelRole.DISC_EDGE:
        return edges_for_class(mask, DISC, include_interior_classes=True)
    if role == ChannelRole.CUP_EDGE:
        return edges_for_class(mask, CUP)
    raise ValueError(f"{role} is not an edge role")
