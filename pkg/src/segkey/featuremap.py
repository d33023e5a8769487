"""Spatially invariant channel permutation of feature maps.

A feature map is a dense float64 array of shape (c, h, w); batched
(n, c, h, w) arrays are accepted everywhere with the channel axis at -3.
Permuting channels only reorders the c slices, so it commutes with any
transform that acts purely on the spatial axes.
"""

from __future__ import annotations

import numpy as np

from .keys import ChannelPermutation


def _channel_count(x: np.ndarray) -> int:
    if x.ndim not in (3, 4):
        raise ValueError(f"feature map must be (c,h,w) or (n,c,h,w), got shape {x.shape}")
    return x.shape[-3]


def permute_channels(x: np.ndarray, p: ChannelPermutation) -> np.ndarray:
    """Return x' with x'[i] = x[p[i]] along the channel axis; x is untouched."""
    if _channel_count(x) != len(p):
        raise ValueError(f"permutation size {len(p)} != channel count {x.shape[-3]}")
    return np.take(x, p.as_index(), axis=-3)


def permute_channels_grad(upstream: np.ndarray, p: ChannelPermutation) -> np.ndarray:
    """Gradient through permute_channels: the inverse permutation of upstream.

    The forward map is a fixed linear shuffle, so its Jacobian transpose is
    the inverse shuffle.
    """
    if _channel_count(upstream) != len(p):
        raise ValueError(f"permutation size {len(p)} != channel count {upstream.shape[-3]}")
    return np.take(upstream, p.inverse().as_index(), axis=-3)


def hflip(x: np.ndarray) -> np.ndarray:
    """Mirror along the width axis, identically per channel."""
    return x[..., :, ::-1].copy()


def vflip(x: np.ndarray) -> np.ndarray:
    """Mirror along the height axis, identically per channel."""
    return x[..., ::-1, :].copy()


def crop(x: np.ndarray, top: int, left: int, height: int, width: int) -> np.ndarray:
    """Extract a spatial rectangle; rejects out-of-bounds rectangles."""
    h, w = x.shape[-2], x.shape[-1]
    if height < 1 or width < 1:
        raise ValueError("crop extent must be positive")
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ValueError(f"crop rectangle ({top},{left},{height},{width}) out of bounds for {h}x{w}")
    return x[..., top : top + height, left : left + width].copy()


def translate(x: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift spatially by (dy, dx) with zero fill; channel count unchanged."""
    h, w = x.shape[-2], x.shape[-1]
    out = np.zeros_like(x)
    sy0, sy1 = max(0, -dy), min(h, h - dy)
    sx0, sx1 = max(0, -dx), min(w, w - dx)
    if sy0 < sy1 and sx0 < sx1:
        out[..., sy0 + dy : sy1 + dy, sx0 + dx : sx1 + dx] = x[..., sy0:sy1, sx0:sx1]
    return out
