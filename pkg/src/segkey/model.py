"""MiniFCN: a small fully convolutional segmentation net with six keyed hook sites.

Fixed topology (input side S, divisible by 8):

    stem  conv3x3 s2 -> relu -> hook1        S/2
    s1    conv3x3 s2 -> relu -> hook2        S/4
    s2    conv3x3 s2 -> relu -> hook3        S/8
    s3    conv3x3 s1 -> relu -> hook4        S/8
    neck  conv1x1    -> relu -> hook5        S/8
    bilinear upsample x8     -> hook6        S
    head  conv1x1 (no relu)  -> logits C,S,S

A hook site optionally permutes the channels of the activation flowing
through it.  The last hook sits before the classifier, so a permutation
never relabels output classes directly.  No normalization layers and no
dropout: two forward passes with the same inputs are bit-identical, and
the backward pass below is the exact reverse-mode gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backend import conv2d_backward, conv2d_forward
from .featuremap import permute_channels, permute_channels_grad
from .interp import upsample, upsample_grad
from .keys import ChannelPermutation, SecretKey, derive_permutation

NUM_HOOKS = 6
UPSAMPLE_FACTOR = 8

CHECKPOINT_MAGIC = b"SKCP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MiniFcnConfig:
    in_channels: int = 3
    num_classes: int = 4
    widths: tuple[int, int, int, int] = (16, 32, 64, 64)
    input_size: int = 32

    def __post_init__(self):
        if len(self.widths) != 4 or any(w < 1 for w in self.widths):
            raise ValueError("widths must be four positive integers")
        if self.in_channels < 1 or self.num_classes < 2:
            raise ValueError("need >= 1 input channel and >= 2 classes")
        if self.input_size % UPSAMPLE_FACTOR:
            raise ValueError(f"input size must be divisible by {UPSAMPLE_FACTOR}")

    def hook_channels(self) -> dict[int, int]:
        w0, w1, w2, w3 = self.widths
        return {1: w0, 2: w1, 3: w2, 4: w3, 5: w3, 6: w3}

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "num_classes": self.num_classes,
            "widths": list(self.widths),
            "input_size": self.input_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MiniFcnConfig":
        return cls(
            in_channels=int(d["in_channels"]),
            num_classes=int(d["num_classes"]),
            widths=tuple(int(w) for w in d["widths"]),
            input_size=int(d["input_size"]),
        )


@dataclass(frozen=True)
class ProtectionSpec:
    """Which hook sites are permuted, and with which key."""

    permuted_hooks: frozenset[int] = field(default_factory=frozenset)
    key: SecretKey | None = None

    def __post_init__(self):
        object.__setattr__(self, "permuted_hooks", frozenset(self.permuted_hooks))
        bad = [h for h in self.permuted_hooks if not 1 <= h <= NUM_HOOKS]
        if bad:
            raise ValueError(f"hook ids out of range 1..{NUM_HOOKS}: {sorted(bad)}")
        if self.permuted_hooks and self.key is None:
            raise ValueError("permuted hooks require a key; pass an empty hook set for the no-permutation path")

    @classmethod
    def unprotected(cls) -> "ProtectionSpec":
        return cls(frozenset(), None)


def resolve_hook_perms(spec: ProtectionSpec, cfg: MiniFcnConfig) -> dict[int, ChannelPermutation]:
    """Derive one independent permutation per protected hook site."""
    widths = cfg.hook_channels()
    return {h: derive_permutation(spec.key, h, widths[h]) for h in sorted(spec.permuted_hooks)}


# (name, kernel, stride, pad); channel counts come from the config
_STAGES = (
    ("stem", 3, 2, 1),
    ("s1", 3, 2, 1),
    ("s2", 3, 2, 1),
    ("s3", 3, 1, 1),
    ("neck", 1, 1, 0),
)


def _layer_shapes(cfg: MiniFcnConfig) -> list[tuple[str, int, int, int]]:
    w0, w1, w2, w3 = cfg.widths
    chans = [(cfg.in_channels, w0), (w0, w1), (w1, w2), (w2, w3), (w3, w3)]
    layers = [(name, ci, co, k) for (name, k, _, _), (ci, co) in zip(_STAGES, chans)]
    layers.append(("head", w3, cfg.num_classes, 1))
    return layers


def init_params(cfg: MiniFcnConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Kaiming fan-in normal weights, zero biases."""
    params: dict[str, np.ndarray] = {}
    for name, ci, co, k in _layer_shapes(cfg):
        fan_in = ci * k * k
        params[f"{name}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(co, ci, k, k))
        params[f"{name}.b"] = np.zeros(co, dtype=np.float64)
    return params


def _param_signature(params: dict[str, np.ndarray]) -> tuple:
    return tuple((name, params[name].shape) for name in sorted(params))


def forward(
    params: dict[str, np.ndarray],
    x: np.ndarray,
    hook_perms: dict[int, ChannelPermutation] | None = None,
) -> tuple[np.ndarray, dict]:
    """Run the net; returns (logits, cache) where cache feeds `backward`.

    `x` is (in_channels, S, S) or batched (N, in_channels, S, S), values
    expected in [0, 1].  `hook_perms` maps hook id -> resolved permutation;
    missing hooks pass activations through untouched.
    """
    hook_perms = hook_perms or {}
    single = x.ndim == 3
    a = np.asarray(x, dtype=np.float64)
    if single:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"input must be (c,S,S) or (n,c,S,S), got {x.shape}")

    cache: dict = {"single": single, "sig": _param_signature(params), "stages": [], "perms": dict(hook_perms)}
    for hook_id, (name, _, stride, pad) in enumerate(_STAGES, start=1):
        x_in = a
        pre = conv2d_forward(x_in, params[f"{name}.w"], params[f"{name}.b"], stride, pad)
        a = np.maximum(pre, 0.0)
        if hook_id in hook_perms:
            a = permute_channels(a, hook_perms[hook_id])
        cache["stages"].append((name, stride, pad, x_in, pre))

    cache["up_in_hw"] = (a.shape[-2], a.shape[-1])
    a = upsample(a, UPSAMPLE_FACTOR)
    if 6 in hook_perms:
        a = permute_channels(a, hook_perms[6])
    cache["head_in"] = a

    logits = conv2d_forward(a, params["head.w"], params["head.b"], 1, 0)
    cache["logits_shape"] = logits.shape
    return (logits[0] if single else logits), cache


def backward(
    params: dict[str, np.ndarray],
    cache: dict,
    dlogits: np.ndarray,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients; returns (param grads, input gradient)."""
    if cache.get("sig") != _param_signature(params):
        raise ValueError("stale cache: parameters do not match the forward pass")
    single = cache["single"]
    dy = np.asarray(dlogits, dtype=np.float64)
    if single:
        dy = dy[None]
    if dy.shape != cache["logits_shape"]:
        raise ValueError(f"upstream gradient shape {dlogits.shape} does not match forward logits")

    perms = cache["perms"]
    grads: dict[str, np.ndarray] = {}

    dx, grads["head.w"], grads["head.b"] = conv2d_backward(cache["head_in"], params["head.w"], 1, 0, dy)
    if 6 in perms:
        dx = permute_channels_grad(dx, perms[6])
    dx = upsample_grad(dx, *cache["up_in_hw"], UPSAMPLE_FACTOR)

    for hook_id in range(len(_STAGES), 0, -1):
        name, stride, pad, x_in, pre = cache["stages"][hook_id - 1]
        if hook_id in perms:
            dx = permute_channels_grad(dx, perms[hook_id])
        dx = dx * (pre > 0)
        dx, grads[f"{name}.w"], grads[f"{name}.b"] = conv2d_backward(x_in, params[f"{name}.w"], stride, pad, dx)

    return grads, (dx[0] if single else dx)


def cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    ignore_index: int | None = None,
) -> tuple[float, np.ndarray]:
    """Mean pixel cross-entropy and its gradient w.r.t. the logits.

    Accepts (C,H,W)/(H,W) or batched (N,C,H,W)/(N,H,W).  Ignored pixels
    contribute nothing to the loss and get a zero gradient.
    """
    single = logits.ndim == 3
    lg = np.asarray(logits, dtype=np.float64)
    lb = np.asarray(labels)
    if single:
        lg, lb = lg[None], lb[None]
    if lg.ndim != 4 or lb.shape != (lg.shape[0], lg.shape[2], lg.shape[3]):
        raise ValueError(f"shape mismatch: logits {logits.shape}, labels {labels.shape}")
    num_classes = lg.shape[1]

    valid = np.ones(lb.shape, dtype=bool) if ignore_index is None else lb != ignore_index
    checked = lb[valid]
    if checked.size and (checked.min() < 0 or checked.max() >= num_classes):
        raise ValueError(f"label out of range 0..{num_classes - 1}")
    count = int(valid.sum())
    if count == 0:
        raise ValueError("no non-ignored pixels to score")

    shifted = lg - lg.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    softmax = expd / expd.sum(axis=1, keepdims=True)
    logp = shifted - np.log(expd.sum(axis=1, keepdims=True))

    safe_lb = np.where(valid, lb, 0)
    picked = np.take_along_axis(logp, safe_lb[:, None], axis=1)[:, 0]
    loss = -float(picked[valid].sum()) / count

    grad = softmax.copy()
    onehot_rows = np.take_along_axis(grad, safe_lb[:, None], axis=1)
    np.put_along_axis(grad, safe_lb[:, None], onehot_rows - 1.0, axis=1)
    grad *= valid[:, None] / count
    return loss, (grad[0] if single else grad)


def save_checkpoint(
    path,
    params: dict[str, np.ndarray],
    cfg: MiniFcnConfig,
    protection: dict,
    model_id: str,
) -> None:
    """Versioned binary container: named tensors with shape headers, float64 LE.

    `protection` records the hook set or input-transform kind but never key
    material.
    """
    names = sorted(params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_id": model_id,
        "config": cfg.to_dict(),
        "protection": protection,
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(CHECKPOINT_VERSION.to_bytes(4, "little"))
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: MiniFcnConfig
    protection: dict
    model_id: str


def load_checkpoint(path) -> Checkpoint:
    from .errors import FileFormatError

    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{path}: not a checkpoint file")
    version = int.from_bytes(raw[4:8], "little")
    if version != CHECKPOINT_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    hlen = int.from_bytes(raw[8:12], "little")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: corrupt checkpoint header: {exc}") from None
    params: dict[str, np.ndarray] = {}
    offset = 12 + hlen
    for entry in header["tensors"]:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FileFormatError(f"{path}: truncated tensor data for {entry['name']}")
        params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise FileFormatError(f"{path}: trailing bytes after tensor data")
    return Checkpoint(
        params=params,
        config=MiniFcnConfig.from_dict(header["config"]),
        protection=header["protection"],
        model_id=header["model_id"],
    )
