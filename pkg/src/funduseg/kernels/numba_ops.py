"""Numba @njit twins of the numpy kernels (NHWC / HWIO layout).

Parallel loops only ever split over independent output elements, never over
a shared accumulator, so results are bitwise independent of the worker count.
Importing this module requires numba; funduseg.kernels guards that.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=True, cache=True)
def conv2d_forward(x, w, b):
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    ph, pw = kh // 2, kw // 2
    y = np.empty((n, h, wd, f), dtype=x.dtype)
    for nh in prange(n * h):
        ni = nh // h
        yy = nh % h
        for xx in range(wd):
            for fi in range(f):
                y[ni, yy, xx, fi] = b[fi]
            for i in range(kh):
                iy = yy + i - ph
                if iy < 0 or iy >= h:
                    continue
                for j in range(kw):
                    ix = xx + j - pw
                    if ix < 0 or ix >= wd:
                        continue
                    for ci in range(c):
                        v = x[ni, iy, ix, ci]
                        for fi in range(f):
                            y[ni, yy, xx, fi] += v * w[i, j, ci, fi]
    return y


@njit(parallel=True, fastmath=True, cache=True)
def _conv2d_dw_db(x, dy, kh, kw):
    n, h, wd, c = x.shape
    f = dy.shape[3]
    ph, pw = kh // 2, kw // 2
    dw = np.zeros((kh, kw, c, f), dtype=x.dtype)
    db = np.zeros(f, dtype=x.dtype)
    for ci in prange(c):
        for i in range(kh):
            for j in range(kw):
                for ni in range(n):
                    for yy in range(h):
                        iy = yy + i - ph
                        if iy < 0 or iy >= h:
                            continue
                        for xx in range(wd):
                            ix = xx + j - pw
                            if ix < 0 or ix >= wd:
                                continue
                            v = x[ni, iy, ix, ci]
                            for fi in range(f):
                                dw[i, j, ci, fi] += v * dy[ni, yy, xx, fi]
    for fi in prange(f):
        acc = x.dtype.type(0.0)
        for ni in range(n):
            for yy in range(h):
                for xx in range(wd):
                    acc += dy[ni, yy, xx, fi]
        db[fi] = acc
    return dw, db


@njit(parallel=True, fastmath=True, cache=True)
def _conv2d_dx(w, dy, h, wd):
    n = dy.shape[0]
    kh, kw, c, f = w.shape
    ph, pw = kh // 2, kw // 2
    dx = np.zeros((n, h, wd, c), dtype=dy.dtype)
    for nh in prange(n * h):
        ni = nh // h
        iy = nh % h
        for ix in range(wd):
            for i in range(kh):
                yy = iy - i + ph
                if yy < 0 or yy >= h:
                    continue
                for j in range(kw):
                    xx = ix - j + pw
                    if xx < 0 or xx >= wd:
                        continue
                    for fi in range(f):
                        g = dy[ni, yy, xx, fi]
                        for ci in range(c):
                            dx[ni, iy, ix, ci] += g * w[i, j, ci, fi]
    return dx


def conv2d_backward(x, w, dy):
    kh, kw = w.shape[0], w.shape[1]
    dw, db = _conv2d_dw_db(x, dy, kh, kw)
    dx = _conv2d_dx(w, dy, x.shape[1], x.shape[2])
    return dx, dw, db


@njit(parallel=True, cache=True)
def _maxpool2(x):
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    y = np.empty((n, h2, w2, c), dtype=x.dtype)
    idx = np.empty((n, h2, w2, c), dtype=np.uint8)
    for nh in prange(n * h2):
        ni = nh // h2
        yy = nh % h2
        for xx in range(w2):
            for ci in range(c):
                best = x[ni, 2 * yy, 2 * xx, ci]
                bi = 0
                k = 0
                for i in range(2):
                    for j in range(2):
                        v = x[ni, 2 * yy + i, 2 * xx + j, ci]
                        if v > best:  # strict: first max wins ties
                            best = v
                            bi = k
                        k += 1
                y[ni, yy, xx, ci] = best
                idx[ni, yy, xx, ci] = bi
    return y, idx


def maxpool2_forward(x):
    assert x.shape[1] % 2 == 0 and x.shape[2] % 2 == 0, x.shape
    return _maxpool2(x)


@njit(parallel=True, cache=True)
def maxpool2_backward(dy, idx):
    n, h2, w2, c = dy.shape
    dx = np.zeros((n, 2 * h2, 2 * w2, c), dtype=dy.dtype)
    for nh in prange(n * h2):
        ni = nh // h2
        yy = nh % h2
        for xx in range(w2):
            for ci in range(c):
                k = idx[ni, yy, xx, ci]
                dx[ni, 2 * yy + k // 2, 2 * xx + k % 2, ci] = dy[ni, yy, xx, ci]
    return dx


@njit(parallel=True, cache=True)
def upsample2_forward(x):
    n, h, w, c = x.shape
    y = np.empty((n, 2 * h, 2 * w, c), dtype=x.dtype)
    for nh in prange(n * 2 * h):
        ni = nh // (2 * h)
        yy = nh % (2 * h)
        for xx in range(2 * w):
            for ci in range(c):
                y[ni, yy, xx, ci] = x[ni, yy // 2, xx // 2, ci]
    return y


@njit(parallel=True, cache=True)
def upsample2_backward(dy):
    n, h2, w2, c = dy.shape
    h, w = h2 // 2, w2 // 2
    dx = np.empty((n, h, w, c), dtype=dy.dtype)
    for nh in prange(n * h):
        ni = nh // h
        yy = nh % h
        for xx in range(w):
            for ci in range(c):
                dx[ni, yy, xx, ci] = (
                    dy[ni, 2 * yy, 2 * xx, ci]
                    + dy[ni, 2 * yy, 2 * xx + 1, ci]
                    + dy[ni, 2 * yy + 1, 2 * xx, ci]
                    + dy[ni, 2 * yy + 1, 2 * xx + 1, ci]
                )
    return dx


@njit(cache=True)
def _laplacian_response(m):
    h, w = m.shape
    t = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            box = np.int64(0)
            for i in range(-1, 2):
                iy = y + i
                if iy < 0 or iy >= h:
                    continue
                for j in range(-1, 2):
                    ix = x + j
                    if 0 <= ix < w:
                        box += m[iy, ix]
            t[y, x] = 9 * m[y, x] - box
    return t


def laplacian_response(mask):
    return _laplacian_response(mask.astype(np.int64, copy=False))
