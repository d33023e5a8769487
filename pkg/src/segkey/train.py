"""Training loop: SGD with momentum and weight decay, cosine annealing with
warm restarts, joint image/label augmentation, lowest-dev-loss selection.

Defaults are desk scale (batch 16, 30 epochs); the optimizer constants and
the schedule shape are the full recipe.  Everything is seeded: the same
(seed, key, config) reproduces the run bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import blockcrypto
from .errors import TrainingDiverged
from .featuremap import hflip
from .interp import bilinear_resize, nearest_resize
from .model import (
    MiniFcnConfig,
    ProtectionSpec,
    backward,
    cross_entropy,
    forward,
    init_params,
    resolve_hook_perms,
)

CROP_AREA_RANGE = (0.5, 1.0)
CROP_ASPECT_RANGE = (3.0 / 4.0, 4.0 / 3.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr_max: float = 0.1
    lr_min: float = 0.0001
    restart_period: int = 10
    momentum: float = 0.9
    weight_decay: float = 0.005
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be < lr_max")
        if self.restart_period < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs, batch_size and restart_period must be >= 1")


def load_train_config(path, **overrides) -> TrainConfig:
    """Read a TrainConfig from JSON, unknown fields rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    known = TrainConfig.__dataclass_fields__
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown train config fields: {sorted(unknown)}")
    return replace(TrainConfig(**data), **overrides)


def lr_at(t: float, cfg: TrainConfig) -> float:
    """Cosine annealing with warm restarts every `restart_period` epochs."""
    if t < 0:
        raise ValueError("epoch fraction must be >= 0")
    t_cur = math.fmod(t, cfg.restart_period)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * t_cur / cfg.restart_period))


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr: float,
    cfg: TrainConfig,
) -> None:
    """Classic SGD: decay folded into the gradient, then momentum. In place."""
    for name, w in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise TrainingDiverged(-1, f"non-finite gradient in {name}")
        g = g + cfg.weight_decay * w
        v = velocity[name]
        v *= cfg.momentum
        v += g
        w -= lr * v


def _sample_crop_region(rng: np.random.Generator, h: int, w: int) -> tuple[int, int, int, int]:
    """Random resized crop region; falls back to the full extent."""
    area = h * w
    for _ in range(10):
        target = rng.uniform(*CROP_AREA_RANGE) * area
        aspect = math.exp(rng.uniform(math.log(CROP_ASPECT_RANGE[0]), math.log(CROP_ASPECT_RANGE[1])))
        rw = int(round(math.sqrt(target * aspect)))
        rh = int(round(math.sqrt(target / aspect)))
        if 0 < rh <= h and 0 < rw <= w:
            top = int(rng.integers(0, h - rh + 1))
            left = int(rng.integers(0, w - rw + 1))
            return top, left, rh, rw
    return 0, 0, h, w


def augment_pair(
    img: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal flip (p=0.5) then random resized crop, same geometry for both.

    The image is resampled bilinearly and rounded back to uint8; labels use
    nearest neighbor, so the label value set never grows.
    """
    if img.shape[-2:] != labels.shape[-2:]:
        raise ValueError(f"image {img.shape} and labels {labels.shape} disagree spatially")
    h, w = labels.shape
    if rng.random() < 0.5:
        img, labels = hflip(img), hflip(labels)
    region = _sample_crop_region(rng, h, w)
    out_img = bilinear_resize(img.astype(np.float64), h, w, region=region)
    out_img = np.clip(np.rint(out_img), 0, 255).astype(np.uint8)
    out_labels = nearest_resize(labels, h, w, region=region)
    return out_img, out_labels


def _to_input(img_u8: np.ndarray) -> np.ndarray:
    return img_u8.astype(np.float64) / 255.0


def _prepare_batch(samples, indices, epoch, cfg, input_transform, augment):
    imgs, labels = [], []
    for i in indices:
        img, lbl = samples[i].image, samples[i].labels
        if augment:
            rng = np.random.default_rng([cfg.seed, 0xA0, epoch, int(i)])
            img, lbl = augment_pair(img, lbl, rng)
        if input_transform is not None:
            img = blockcrypto.transform_image(img, input_transform)
        imgs.append(_to_input(img))
        labels.append(lbl)
    return np.stack(imgs), np.stack(labels).astype(np.int64)


def dataset_loss(params, samples, hook_perms, input_transform=None, batch_size=32) -> float:
    """Mean cross-entropy over a split, permuted path active, no augmentation."""
    total, count = 0.0, 0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        x = np.stack([_to_input(s.image if input_transform is None else blockcrypto.transform_image(s.image, input_transform)) for s in chunk])
        y = np.stack([s.labels for s in chunk]).astype(np.int64)
        logits, _ = forward(params, x, hook_perms)
        loss, _ = cross_entropy(logits, y)
        total += loss * len(chunk)
        count += len(chunk)
    return total / count


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    best_epoch: int
    best_dev_loss: float
    curves: list[tuple[int, float, float, float]]  # (epoch, train_loss, dev_loss, lr)


def train(
    model_cfg: MiniFcnConfig,
    protection: ProtectionSpec,
    cfg: TrainConfig,
    train_samples,
    dev_samples,
    input_transform: blockcrypto.BlockTransformConfig | None = None,
) -> TrainResult:
    """Train MiniFCN, returning the lowest-dev-loss parameters and loss curves.

    The permutation hooks are active at every forward pass, training and
    dev evaluation alike.  `input_transform` trains the conventional-method
    models on block-transformed images.
    """
    if not train_samples or not dev_samples:
        raise ValueError("train and dev splits must be non-empty")

    hook_perms = resolve_hook_perms(protection, model_cfg)
    params = init_params(model_cfg, np.random.default_rng([cfg.seed, 0x01]))
    velocity = {name: np.zeros_like(w) for name, w in params.items()}

    n = len(train_samples)
    n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
    best_loss, best_epoch, best_params = math.inf, -1, None
    curves: list[tuple[int, float, float, float]] = []

    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 0x5F, epoch]).permutation(n)
        epoch_loss = 0.0
        for b in range(n_batches):
            indices = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            x, y = _prepare_batch(train_samples, indices, epoch, cfg, input_transform, cfg.augment)
            logits, cache = forward(params, x, hook_perms)
            loss, dlogits = cross_entropy(logits, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, "non-finite training loss")
            grads, _ = backward(params, cache, dlogits)
            try:
                sgd_step(params, grads, velocity, lr_at(epoch + b / n_batches, cfg), cfg)
            except TrainingDiverged:
                raise TrainingDiverged(epoch, "non-finite gradient") from None
            epoch_loss += loss * len(indices)

        dev_loss = dataset_loss(params, dev_samples, hook_perms, input_transform)
        if not math.isfinite(dev_loss):
            raise TrainingDiverged(epoch, "non-finite dev loss")
        curves.append((epoch, epoch_loss / n, dev_loss, lr_at(float(epoch), cfg)))
        if dev_loss < best_loss:
            best_loss, best_epoch = dev_loss, epoch
            best_params = {name: w.copy() for name, w in params.items()}

    return TrainResult(params=best_params, best_epoch=best_epoch, best_dev_loss=best_loss, curves=curves)


def write_curves_csv(path, curves) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,dev_loss,lr\n")
        for epoch, train_loss, dev_loss, lr in curves:
            fh.write(f"{epoch},{train_loss!r},{dev_loss!r},{lr!r}\n")
