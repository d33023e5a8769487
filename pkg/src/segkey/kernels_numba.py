"""Numba-jitted convolution kernels (direct loops, parallel over independent outputs).

Every output element is written by exactly one thread, so results are
bit-deterministic for a fixed machine regardless of the thread count.
Signatures mirror kernels_numpy.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_JIT = {"cache": True, "parallel": True}


@njit(**_JIT)
def _conv2d_forward(x, w, b, stride, pad):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    y = np.empty((n, co, oh, ow), dtype=np.float64)
    for ni in prange(n):
        for oc in range(co):
            for i in range(oh):
                i0 = i * stride - pad
                for j in range(ow):
                    j0 = j * stride - pad
                    acc = b[oc]
                    for ic in range(ci):
                        for ki in range(kh):
                            ii = i0 + ki
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(kw):
                                jj = j0 + kj
                                if jj < 0 or jj >= wd:
                                    continue
                                acc += w[oc, ic, ki, kj] * x[ni, ic, ii, jj]
                    y[ni, oc, i, j] = acc
    return y


@njit(**_JIT)
def _conv2d_backward_dx(x_shape_h, x_shape_w, w, stride, pad, dy):
    n, co, oh, ow = dy.shape
    ci, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    dx = np.zeros((n, ci, x_shape_h, x_shape_w), dtype=np.float64)
    for ni in prange(n):
        for oc in range(co):
            for i in range(oh):
                i0 = i * stride - pad
                for j in range(ow):
                    j0 = j * stride - pad
                    g = dy[ni, oc, i, j]
                    for ic in range(ci):
                        for ki in range(kh):
                            ii = i0 + ki
                            if ii < 0 or ii >= x_shape_h:
                                continue
                            for kj in range(kw):
                                jj = j0 + kj
                                if jj < 0 or jj >= x_shape_w:
                                    continue
                                dx[ni, ic, ii, jj] += w[oc, ic, ki, kj] * g
    return dx


@njit(**_JIT)
def _conv2d_backward_dw(x, stride, pad, dy, kh, kw):
    n, ci, h, wd = x.shape
    co, _, oh, ow = dy.shape[0], 0, dy.shape[2], dy.shape[3]
    co = dy.shape[1]
    dw = np.zeros((co, ci, kh, kw), dtype=np.float64)
    db = np.zeros(co, dtype=np.float64)
    for oc in prange(co):
        for ni in range(n):
            for i in range(oh):
                i0 = i * stride - pad
                for j in range(ow):
                    j0 = j * stride - pad
                    g = dy[ni, oc, i, j]
                    db[oc] += g
                    for ic in range(ci):
                        for ki in range(kh):
                            ii = i0 + ki
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(kw):
                                jj = j0 + kj
                                if jj < 0 or jj >= wd:
                                    continue
                                dw[oc, ic, ki, kj] += x[ni, ic, ii, jj] * g
    return dw, db


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    return _conv2d_forward(x, w, b, stride, pad)


def conv2d_backward(x: np.ndarray, w: np.ndarray, stride: int, pad: int,
                    dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dx = _conv2d_backward_dx(x.shape[2], x.shape[3], w, stride, pad, dy)
    dw, db = _conv2d_backward_dw(x, stride, pad, dy, w.shape[2], w.shape[3])
    return dx, dw, db
