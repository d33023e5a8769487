"""Bilinear and nearest-neighbor resampling as explicit linear operators.

Sampling follows the align-corners=false convention: output pixel p reads
source coordinate start + (p + 0.5) * length / n_out - 0.5, clamped to the
source (or crop-region) bounds.  Building the row/column weight matrices
once makes the upsample gradient an exact transpose.
"""

from __future__ import annotations

import numpy as np


def bilinear_matrix(n_in: int, n_out: int, start: float = 0.0, length: float | None = None) -> np.ndarray:
    """(n_out, n_in) weight matrix; rows sum to 1."""
    if length is None:
        length = float(n_in)
    p = np.arange(n_out, dtype=np.float64)
    src = start + (p + 0.5) * (length / n_out) - 0.5
    lo = start
    hi = start + length - 1.0
    src = np.clip(src, max(0.0, lo), min(float(n_in - 1), hi))
    i0 = np.floor(src).astype(np.int64)
    i0 = np.clip(i0, 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    w0 = 1.0 - w1
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), w0)
    np.add.at(m, (rows, i1), w1)
    return m


def nearest_index(n_in: int, n_out: int, start: int = 0, length: int | None = None) -> np.ndarray:
    """Index of the source sample nearest each output pixel."""
    if length is None:
        length = n_in
    p = np.arange(n_out, dtype=np.float64)
    idx = start + np.floor((p + 0.5) * (length / n_out)).astype(np.int64)
    return np.clip(idx, start, min(start + length - 1, n_in - 1))


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int, region: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Resize the last two axes; `region` = (top, left, height, width) crops first."""
    h, w = x.shape[-2], x.shape[-1]
    if region is None:
        my = bilinear_matrix(h, out_h)
        mx = bilinear_matrix(w, out_w)
    else:
        top, left, rh, rw = region
        if rh < 1 or rw < 1 or top < 0 or left < 0 or top + rh > h or left + rw > w:
            raise ValueError(f"region {region} out of bounds for {h}x{w}")
        my = bilinear_matrix(h, out_h, start=float(top), length=float(rh))
        mx = bilinear_matrix(w, out_w, start=float(left), length=float(rw))
    return np.einsum("ph,...hw,qw->...pq", my, np.asarray(x, dtype=np.float64), mx, optimize=True)


def nearest_resize(x: np.ndarray, out_h: int, out_w: int, region: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Nearest-neighbor resize of the last two axes; preserves the value set."""
    h, w = x.shape[-2], x.shape[-1]
    if region is None:
        iy = nearest_index(h, out_h)
        ix = nearest_index(w, out_w)
    else:
        top, left, rh, rw = region
        if rh < 1 or rw < 1 or top < 0 or left < 0 or top + rh > h or left + rw > w:
            raise ValueError(f"region {region} out of bounds for {h}x{w}")
        iy = nearest_index(h, out_h, start=top, length=rh)
        ix = nearest_index(w, out_w, start=left, length=rw)
    return x[..., iy[:, None], ix[None, :]]


def upsample_matrices(h: int, w: int, factor: int) -> tuple[np.ndarray, np.ndarray]:
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    return bilinear_matrix(h, h * factor), bilinear_matrix(w, w * factor)


def upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear upsample of the last two axes by an integer factor."""
    my, mx = upsample_matrices(x.shape[-2], x.shape[-1], factor)
    return np.einsum("ph,...hw,qw->...pq", my, x, mx, optimize=True)


def upsample_grad(dy: np.ndarray, in_h: int, in_w: int, factor: int) -> np.ndarray:
    """Exact transpose of `upsample` for the backward pass."""
    my, mx = upsample_matrices(in_h, in_w, factor)
    return np.einsum("ph,...pq,qw->...hw", my, dy, mx, optimize=True)
