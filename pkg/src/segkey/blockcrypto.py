"""Keyed block-wise image transforms: SHF, NP and FFX.

These are the conventional input-side protections.  All three are
deterministic in (key, block size) and invertible given the key:

* SHF shuffles the B*B spatial positions inside every block with one
  key-derived permutation, channels moving together as pixels.
* NP applies one key-derived binary mask of shape (c, B, B) to every
  block; masked entries map v -> 255 - v (an involution).
* FFX replaces each pixel value with a keyed bijection on [0, 255] built
  from an 8-round balanced Feistel network on 4-bit halves, tweaked by the
  channel index.  It is position-independent, so the block size plays no
  role in the mapping.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .keys import (
    ChannelPermutation,
    DeriveContext,
    Purpose,
    SecretKey,
    derive_stream,
    fisher_yates,
)

FFX_ROUNDS = 8
_FFX_SUBKEY_BYTES = 16


class TransformKind(Enum):
    SHF = "shf"
    NP = "np"
    FFX = "ffx"


@dataclass(frozen=True)
class BlockTransformConfig:
    kind: TransformKind
    block_size: int
    key: SecretKey

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block size must be >= 1")


def _check_image(img: np.ndarray) -> None:
    if img.ndim != 3 or img.dtype != np.uint8:
        raise ValueError(f"image must be a (c,h,w) uint8 array, got shape {img.shape} dtype {img.dtype}")


def _check_divisible(img: np.ndarray, block: int) -> None:
    _, h, w = img.shape
    if h % block or w % block:
        raise ValueError(f"block size {block} does not divide image size {h}x{w} (no implicit padding)")


def derive_block_permutation(key: SecretKey, block: int) -> ChannelPermutation:
    """One permutation of the B*B within-block positions, shared by all blocks."""
    n = block * block
    stream = derive_stream(key, DeriveContext(Purpose.SHF_PERM, 0, n))
    return ChannelPermutation(fisher_yates(stream, n))


def apply_block_permutation(img: np.ndarray, block: int, perm: ChannelPermutation) -> np.ndarray:
    """Permute the flattened positions of every B*B block by `perm`."""
    _check_image(img)
    _check_divisible(img, block)
    if len(perm) != block * block:
        raise ValueError(f"permutation size {len(perm)} != block area {block * block}")
    c, h, w = img.shape
    nbh, nbw = h // block, w // block
    blocks = img.reshape(c, nbh, block, nbw, block).transpose(0, 1, 3, 2, 4).reshape(c, nbh, nbw, block * block)
    shuffled = blocks[..., perm.as_index()]
    out = shuffled.reshape(c, nbh, nbw, block, block).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
    return np.ascontiguousarray(out)


def shf(img: np.ndarray, cfg: BlockTransformConfig, decrypt: bool = False) -> np.ndarray:
    if cfg.kind is not TransformKind.SHF:
        raise ValueError("config kind must be SHF")
    perm = derive_block_permutation(cfg.key, cfg.block_size)
    if decrypt:
        perm = perm.inverse()
    return apply_block_permutation(img, cfg.block_size, perm)


def derive_np_mask(key: SecretKey, channels: int, block: int) -> np.ndarray:
    """Boolean (c, B, B) mask; bits taken MSB-first from the derived stream."""
    size = channels * block * block
    stream = derive_stream(key, DeriveContext(Purpose.NP_MASK, 0, size))
    raw = np.frombuffer(stream.read((size + 7) // 8), dtype=np.uint8)
    bits = np.unpackbits(raw)[:size]
    return bits.reshape(channels, block, block).astype(bool)


def apply_np_mask(img: np.ndarray, block: int, mask: np.ndarray) -> np.ndarray:
    """Negate (v -> 255 - v) the masked positions of every block."""
    _check_image(img)
    _check_divisible(img, block)
    c, h, w = img.shape
    if mask.shape != (c, block, block):
        raise ValueError(f"mask shape {mask.shape} != ({c},{block},{block})")
    nbh, nbw = h // block, w // block
    tiled = np.tile(mask[:, None, :, None, :], (1, nbh, 1, nbw, 1)).reshape(c, h, w)
    out = img.copy()
    out[tiled] = 255 - out[tiled]
    return out


def np_transform(img: np.ndarray, cfg: BlockTransformConfig, decrypt: bool = False) -> np.ndarray:
    # negation is an involution, so decrypt == encrypt
    del decrypt
    if cfg.kind is not TransformKind.NP:
        raise ValueError("config kind must be NP")
    mask = derive_np_mask(cfg.key, img.shape[0], cfg.block_size)
    return apply_np_mask(img, cfg.block_size, mask)


def _ffx_subkey(key: SecretKey) -> bytes:
    return derive_stream(key, DeriveContext(Purpose.FFX_KEY, 0, _FFX_SUBKEY_BYTES)).read(_FFX_SUBKEY_BYTES)


def _ffx_round(subkey: bytes, round_index: int, channel: int, half: int) -> int:
    digest = hashlib.sha256(subkey + bytes([round_index, channel, half])).digest()
    return digest[0] >> 4


def ffx_value_table(key: SecretKey, channel: int, decrypt: bool = False) -> np.ndarray:
    """The keyed bijection on [0,255] for one channel, as a uint8 lookup table."""
    subkey = _ffx_subkey(key)
    table = np.empty(256, dtype=np.uint8)
    for v in range(256):
        left, right = v >> 4, v & 0xF
        if not decrypt:
            for r in range(FFX_ROUNDS):
                left, right = right, left ^ _ffx_round(subkey, r, channel, right)
        else:
            for r in reversed(range(FFX_ROUNDS)):
                left, right = right ^ _ffx_round(subkey, r, channel, left), left
        table[v] = (left << 4) | right
    return table


def ffx_transform(img: np.ndarray, cfg: BlockTransformConfig, decrypt: bool = False) -> np.ndarray:
    if cfg.kind is not TransformKind.FFX:
        raise ValueError("config kind must be FFX")
    _check_image(img)
    out = np.empty_like(img)
    for ch in range(img.shape[0]):
        table = ffx_value_table(cfg.key, ch, decrypt=decrypt)
        out[ch] = table[img[ch]]
    return out


def transform_image(img: np.ndarray, cfg: BlockTransformConfig, decrypt: bool = False) -> np.ndarray:
    """Apply (or invert) the configured transform."""
    if cfg.kind is TransformKind.SHF:
        return shf(img, cfg, decrypt=decrypt)
    if cfg.kind is TransformKind.NP:
        return np_transform(img, cfg, decrypt=decrypt)
    return ffx_transform(img, cfg, decrypt=decrypt)
