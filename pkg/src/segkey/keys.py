"""Secret keys and deterministic derivation of permutations and masks.

Every keyed transform in the toolkit draws its randomness from one
primitive: a 32-byte secret key plus a derivation context is hashed into a
64-bit seed, which drives a splitmix64 counter generator.  Distinct
contexts (purpose tag, hook/block id, size) give unrelated streams, so a
single key can safely drive the channel permutations, the block shuffles,
the negation masks and the value cipher at the same time.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from enum import Enum

import numpy as np

KEY_BYTES = 32

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class Purpose(Enum):
    """Domain-separation tag mixed into every derived stream."""

    CHANNEL_PERM = "ChannelPerm"
    SHF_PERM = "ShfPerm"
    NP_MASK = "NpMask"
    FFX_KEY = "FfxKey"


@dataclass(frozen=True)
class SecretKey:
    """Opaque 32-byte key; all derived material is a pure function of it."""

    seed: bytes

    def __post_init__(self):
        if not isinstance(self.seed, bytes):
            raise TypeError("secret key seed must be bytes")
        if len(self.seed) != KEY_BYTES:
            raise ValueError(f"secret key must be exactly {KEY_BYTES} bytes, got {len(self.seed)}")

    def hex(self) -> str:
        return self.seed.hex()

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        text = text.strip()
        if len(text) != 2 * KEY_BYTES:
            raise ValueError(f"key hex must be {2 * KEY_BYTES} characters, got {len(text)}")
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise ValueError(f"invalid key hex: {exc}") from None


@dataclass(frozen=True)
class DeriveContext:
    """What a derived stream is for: purpose, hook/block id and output size."""

    purpose: Purpose
    hook_or_block_id: int
    size: int

    def __post_init__(self):
        if not isinstance(self.purpose, Purpose):
            raise TypeError("purpose must be a Purpose")
        if self.hook_or_block_id < 0:
            raise ValueError("hook_or_block_id must be non-negative")
        if self.size < 1:
            raise ValueError("size must be >= 1")


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


class KeyStream:
    """Infinite reproducible byte stream (splitmix64 in counter mode).

    Word i is mix64(seed64 + (i+1)*GAMMA), emitted as 8 big-endian bytes.
    """

    def __init__(self, seed64: int):
        self._seed = seed64 & _MASK64
        self._counter = 0
        self._buf = bytearray()

    def next_u64(self) -> int:
        self._counter += 1
        return _mix64((self._seed + self._counter * _GAMMA) & _MASK64)

    def read(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("read size must be non-negative")
        while len(self._buf) < n:
            self._buf += self.next_u64().to_bytes(8, "big")
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def uniform(self, bound: int) -> int:
        """Unbiased integer in [0, bound) via rejection sampling."""
        if bound < 1:
            raise ValueError("bound must be >= 1")
        if bound == 1:
            return 0
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % bound


def derive_stream(key: SecretKey, ctx: DeriveContext) -> KeyStream:
    """Deterministic stream for (key, ctx); any differing field decorrelates it."""
    material = (
        key.seed
        + ctx.purpose.value.encode("ascii")
        + ctx.hook_or_block_id.to_bytes(8, "big")
        + ctx.size.to_bytes(8, "big")
    )
    seed64 = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
    return KeyStream(seed64)


@dataclass(frozen=True)
class ChannelPermutation:
    """Bijection over {1..c}: output slot i reads input slot mapping[i-1]."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        c = len(self.mapping)
        if c < 1:
            raise ValueError("permutation must have at least one element")
        if sorted(self.mapping) != list(range(1, c + 1)):
            raise ValueError(f"not a bijection over 1..{c}: {self.mapping}")

    def __len__(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, c: int) -> "ChannelPermutation":
        return cls(tuple(range(1, c + 1)))

    def is_identity(self) -> bool:
        return all(a == i + 1 for i, a in enumerate(self.mapping))

    def as_index(self) -> np.ndarray:
        """0-based gather index: out[i] = in[index[i]]."""
        return np.asarray(self.mapping, dtype=np.int64) - 1

    def inverse(self) -> "ChannelPermutation":
        inv = [0] * len(self.mapping)
        for i, a in enumerate(self.mapping, start=1):
            inv[a - 1] = i
        return ChannelPermutation(tuple(inv))


def invert_permutation(p: ChannelPermutation) -> ChannelPermutation:
    """q with q[p[i]] = i, so composing p then q is the identity."""
    return p.inverse()


def fisher_yates(stream: KeyStream, n: int) -> tuple[int, ...]:
    """Uniform 1-based permutation of {1..n} from an unbiased stream."""
    a = list(range(1, n + 1))
    for i in range(n - 1, 0, -1):
        j = stream.uniform(i + 1)
        a[i], a[j] = a[j], a[i]
    return tuple(a)


def derive_permutation(key: SecretKey, hook_id: int, c: int) -> ChannelPermutation:
    """Key-derived uniform channel permutation for one hook site."""
    if c < 1:
        raise ValueError("channel count must be >= 1")
    stream = derive_stream(key, DeriveContext(Purpose.CHANNEL_PERM, hook_id, c))
    return ChannelPermutation(fisher_yates(stream, c))


def random_key(rng: np.random.Generator | None = None) -> SecretKey:
    """Fresh 32-byte key from the OS, or from `rng` for reproducible draws."""
    if rng is None:
        return SecretKey(secrets.token_bytes(KEY_BYTES))
    return SecretKey(rng.bytes(KEY_BYTES))


def sample_incorrect_key(correct: SecretKey, rng: np.random.Generator) -> SecretKey:
    """Random key guaranteed to differ from `correct` (redraw on collision)."""
    while True:
        k = random_key(rng)
        if k != correct:
            return k


def load_key_file(path) -> SecretKey:
    """Key file: one line of 64 lowercase hex characters (trailing newline ok)."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    return SecretKey.from_hex(text)


def save_key_file(path, key: SecretKey) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(key.hex() + "\n")
