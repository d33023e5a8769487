"""Pure-numpy convolution kernels (im2col + BLAS matmul).

Reference path for the numba kernels and the fallback when numba is not
installed.  All arrays are float64, NCHW.
"""

from __future__ import annotations

import numpy as np


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, ci = xp.shape[0], xp.shape[1]
    cols = np.empty((n, ci, kh, kw, oh, ow), dtype=np.float64)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + (oh - 1) * stride + 1 : stride,
                                    kj : kj + (ow - 1) * stride + 1 : stride]
    return cols.reshape(n, ci * kh * kw, oh * ow)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    y = w.reshape(co, -1) @ cols + b[:, None]
    return y.reshape(n, co, oh, ow)


def conv2d_backward(x: np.ndarray, w: np.ndarray, stride: int, pad: int,
                    dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh, ow = dy.shape[2], dy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    dy2 = dy.reshape(n, co, oh * ow)

    dw = np.einsum("nop,nkp->ok", dy2, cols, optimize=True).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))

    dcols = (w.reshape(co, -1).T @ dy2).reshape(n, ci, kh, kw, oh, ow)
    dxp = np.zeros_like(xp)
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, :, ki : ki + (oh - 1) * stride + 1 : stride,
                kj : kj + (ow - 1) * stride + 1 : stride] += dcols[:, :, ki, kj]
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return np.ascontiguousarray(dx), dw, db
