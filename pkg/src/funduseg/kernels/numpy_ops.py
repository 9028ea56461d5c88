"""Pure-numpy kernels: same-padded convolution, 2x2 max pooling, nearest 2x
upsampling, and the integer Laplacian response.

Layout is NHWC throughout (matching the toolkit's channel-last raster
convention); conv kernels are HWIO, shaped (kh, kw, C_in, C_out). The 3x3
convolution runs as nine stacked matmuls over shifted views of the padded
input, which BLAS handles far faster than a materialized im2col here.
"""

import numpy as np


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Convolve x (N,H,W,C) with w (kh,kw,C,F) + bias b (F,). Returns (N,H,W,F)."""
    n, h, wd, c = x.shape
    kh, kw, c2, f = w.shape
    assert c == c2, (c, c2)
    if kh == 1 and kw == 1:
        return x @ w[0, 0] + b
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    y = np.empty((n, h, wd, f), dtype=x.dtype)
    y[:] = b
    for i in range(kh):
        for j in range(kw):
            y += xp[:, i:i + h, j:j + wd, :] @ w[i, j]
    return y


def conv2d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients of a same-padded conv. Returns (dx, dw, db)."""
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    db = dy.sum(axis=(0, 1, 2))
    if kh == 1 and kw == 1:
        dw = np.tensordot(x, dy, axes=([0, 1, 2], [0, 1, 2]))[None, None]
        dx = dy @ w[0, 0].T
        return dx, dw, db
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    dw = np.empty_like(w)
    dyt = dy.transpose(0, 1, 3, 2)  # (N,H,F,W) view feeding stacked matmuls
    for i in range(kh):
        for j in range(kw):
            dw[i, j] = np.matmul(dyt, xp[:, i:i + h, j:j + wd, :]).sum(axis=(0, 1)).T
    # dx is the same conv with taps flipped and in/out channels swapped
    flipped = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    dx = conv2d_forward(dy, flipped, np.zeros(c, dtype=dy.dtype))
    return dx, dw, db


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max pool. Returns (y, idx) with idx in 0..3 (first max wins)."""
    n, h, w, c = x.shape
    assert h % 2 == 0 and w % 2 == 0, (h, w)
    s0, s1 = x[:, ::2, ::2], x[:, ::2, 1::2]
    s2, s3 = x[:, 1::2, ::2], x[:, 1::2, 1::2]
    y = np.maximum(np.maximum(s0, s1), np.maximum(s2, s3))
    idx = np.full(y.shape, 3, dtype=np.uint8)  # reverse order so the first max wins
    idx[s2 == y] = 2
    idx[s1 == y] = 1
    idx[s0 == y] = 0
    return y, idx


def maxpool2_backward(dy: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Scatter pooled gradients back to the 2x2 source positions."""
    n, h2, w2, c = dy.shape
    dx = np.empty((n, 2 * h2, 2 * w2, c), dtype=dy.dtype)
    dx[:, ::2, ::2] = np.where(idx == 0, dy, 0)
    dx[:, ::2, 1::2] = np.where(idx == 1, dy, 0)
    dx[:, 1::2, ::2] = np.where(idx == 2, dy, 0)
    dx[:, 1::2, 1::2] = np.where(idx == 3, dy, 0)
    return dx


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling."""
    return np.ascontiguousarray(x.repeat(2, axis=1).repeat(2, axis=2))


def upsample2_backward(dy: np.ndarray) -> np.ndarray:
    """Adjoint of nearest 2x upsampling: sum each 2x2 block."""
    n, h, w, c = dy.shape
    return np.ascontiguousarray(
        dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))
    )


def laplacian_response(mask: np.ndarray) -> np.ndarray:
    """Exact integer response of the 8-connected Laplacian over a zero-padded plane.

    The fixed kernel is -1 everywhere with +8 at the center, so the response
    equals 9*mask - (3x3 box sum); arithmetic stays in int64.
    """
    m = mask.astype(np.int64, copy=False)
    h, w = m.shape
    mp = np.pad(m, 1)
    box = np.zeros((h, w), dtype=np.int64)
    for i in range(3):
        for j in range(3):
            box += mp[i:i + h, j:j + w]
    return 9 * m - box
