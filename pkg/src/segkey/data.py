"""Deterministic synthetic segmentation data: colored shapes on textured noise.

Classes: 0 background, 1 disk, 2 rectangle, 3 triangle.  Every sample is a
pure function of (seed, split, index), so regeneration is byte-identical
and the three splits are disjoint by construction.  Images are stored as
binary PPM (P6), label maps as binary PGM (P5) holding class indices, with
a JSON manifest tying a directory together.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError
from .interp import bilinear_resize, nearest_resize

CLASS_NAMES = ("background", "disk", "rectangle", "triangle")
SPLITS = ("train", "dev", "test")
MANIFEST_NAME = "manifest.json"

# union of shape masks stays inside this band of the pixel count
BACKGROUND_FRACTION_RANGE = (0.3, 0.95)
_MAX_RENDER_RETRIES = 50


@dataclass(frozen=True)
class SegSample:
    image: np.ndarray  # (3, h, w) uint8
    labels: np.ndarray  # (h, w) uint8 class indices

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3 or self.image.dtype != np.uint8:
            raise ValueError(f"image must be (3,h,w) uint8, got {self.image.shape} {self.image.dtype}")
        if self.labels.shape != self.image.shape[1:]:
            raise ValueError(f"labels {self.labels.shape} do not match image {self.image.shape[1:]}")


def write_ppm(path, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[0] != 3 or img.dtype != np.uint8:
        raise ValueError("write_ppm expects a (3,h,w) uint8 array")
    _, h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img.transpose(1, 2, 0)).tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError("write_pgm expects a (h,w) uint8 array")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(gray).tobytes())


def _parse_netpbm(path, magic: bytes) -> tuple[int, int, bytes]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(magic):
        raise FileFormatError(f"{path}: expected {magic.decode()} header")
    pos = len(magic)
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(raw):
            raise FileFormatError(f"{path}: truncated header")
        ch = raw[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = raw.find(b"\n", pos)
            if nl < 0:
                raise FileFormatError(f"{path}: unterminated comment")
            pos = nl + 1
        elif ch.isdigit():
            end = pos
            while end < len(raw) and raw[end : end + 1].isdigit():
                end += 1
            fields.append(int(raw[pos:end]))
            pos = end
        else:
            raise FileFormatError(f"{path}: malformed header byte {ch!r}")
    w, h, maxval = fields
    if maxval != 255:
        raise FileFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise FileFormatError(f"{path}: missing whitespace after header")
    return w, h, raw[pos + 1 :]


def read_ppm(path) -> np.ndarray:
    w, h, data = _parse_netpbm(path, b"P6")
    if len(data) != 3 * h * w:
        raise FileFormatError(f"{path}: expected {3 * h * w} pixel bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1).copy()


def read_pgm(path) -> np.ndarray:
    w, h, data = _parse_netpbm(path, b"P5")
    if len(data) != h * w:
        raise FileFormatError(f"{path}: expected {h * w} pixel bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def _draw_disk(rng, size):
    r = rng.uniform(0.13, 0.22) * size
    cy = rng.uniform(r, size - r)
    cx = rng.uniform(r, size - r)
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _draw_rectangle(rng, size):
    rh = max(2, int(round(rng.uniform(0.23, 0.42) * size)))
    rw = max(2, int(round(rng.uniform(0.23, 0.42) * size)))
    top = int(rng.integers(0, size - rh + 1))
    left = int(rng.integers(0, size - rw + 1))
    mask = np.zeros((size, size), dtype=bool)
    mask[top : top + rh, left : left + rw] = True
    return mask


def _draw_triangle(rng, size):
    side = max(4, int(round(rng.uniform(0.32, 0.5) * size)))
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    apex_x = left + rng.uniform(0.25, 0.75) * side
    verts = np.array([
        [top, apex_x],
        [top + side - 1, left],
        [top + side - 1, left + side - 1],
    ], dtype=np.float64)
    yy, xx = np.mgrid[0:size, 0:size]
    inside = np.ones((size, size), dtype=bool)
    for i in range(3):
        y0, x0 = verts[i]
        y1, x1 = verts[(i + 1) % 3]
        # vertices are counter-clockwise in (row, col) space
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside


_SHAPE_PAINTERS = {1: _draw_disk, 2: _draw_rectangle, 3: _draw_triangle}


def _pick_fill_color(rng, bg_base):
    while True:
        color = rng.integers(60, 256, size=3)
        if np.abs(color.astype(int) - bg_base.astype(int)).sum() >= 150:
            return color.astype(np.uint8)


def render_sample(rng: np.random.Generator, size: int) -> SegSample:
    """One image/label pair; redraws until the background band is met."""
    for _ in range(_MAX_RENDER_RETRIES):
        bg_base = rng.integers(30, 121, size=3)
        noise = rng.integers(-18, 19, size=(3, size, size))
        img = np.clip(bg_base[:, None, None] + noise, 0, 255).astype(np.uint8)
        labels = np.zeros((size, size), dtype=np.uint8)

        for _ in range(int(rng.integers(1, 4))):
            cls = int(rng.integers(1, 4))
            mask = _SHAPE_PAINTERS[cls](rng, size)
            color = _pick_fill_color(rng, bg_base)
            img[:, mask] = color[:, None]
            labels[mask] = cls

        bg_fraction = float((labels == 0).mean())
        if BACKGROUND_FRACTION_RANGE[0] <= bg_fraction <= BACKGROUND_FRACTION_RANGE[1]:
            return SegSample(image=img, labels=labels)
    raise RuntimeError("shape budget violated repeatedly; generator parameters are inconsistent")


def sample_paths(root, split: str, index: int) -> tuple[str, str]:
    return (
        os.path.join(root, split, f"img_{index:05d}.ppm"),
        os.path.join(root, split, f"lbl_{index:05d}.pgm"),
    )


def generate_dataset(out_dir, seed: int, n_train: int, n_dev: int, n_test: int,
                     size: int, num_classes: int = 4) -> dict:
    """Write a full dataset; byte-identical for identical arguments."""
    if size < 16:
        raise ValueError("size must be >= 16")
    counts = {"train": n_train, "dev": n_dev, "test": n_test}
    if any(n < 1 for n in counts.values()):
        raise ValueError("every split needs at least one sample")
    if num_classes != len(CLASS_NAMES):
        raise ValueError(f"generator draws exactly {len(CLASS_NAMES)} classes")

    os.makedirs(out_dir, exist_ok=True)
    for split_idx, split in enumerate(SPLITS):
        os.makedirs(os.path.join(out_dir, split), exist_ok=True)
        for i in range(counts[split]):
            rng = np.random.default_rng([seed, split_idx, i])
            sample = render_sample(rng, size)
            img_path, lbl_path = sample_paths(out_dir, split, i)
            write_ppm(img_path, sample.image)
            write_pgm(lbl_path, sample.labels)

    manifest = {
        "version": 1,
        "size": size,
        "num_classes": num_classes,
        "class_names": list(CLASS_NAMES),
        "splits": counts,
        "seed": seed,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(root) -> dict:
    path = os.path.join(root, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise FileFormatError(f"{path}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: malformed manifest: {exc}") from None


def load_sample(image_path, label_path, num_classes: int = 4) -> SegSample:
    img = read_ppm(image_path)
    labels = read_pgm(label_path)
    if labels.shape != img.shape[1:]:
        raise FileFormatError(
            f"{label_path}: label size {labels.shape} does not match image {img.shape[1:]}")
    if labels.max(initial=0) >= num_classes:
        raise FileFormatError(f"{label_path}: label value {labels.max()} >= num_classes {num_classes}")
    return SegSample(image=img, labels=labels)


def load_split(root, split: str) -> list[SegSample]:
    manifest = load_manifest(root)
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    count = manifest["splits"][split]
    samples = []
    for i in range(count):
        img_path, lbl_path = sample_paths(root, split, i)
        samples.append(load_sample(img_path, lbl_path, manifest["num_classes"]))
    return samples


def resize_sample(sample: SegSample, new_size: int) -> SegSample:
    """Bilinear for the image, nearest for the labels."""
    if new_size < 1:
        raise ValueError("new size must be >= 1")
    img = bilinear_resize(sample.image.astype(np.float64), new_size, new_size)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    labels = nearest_resize(sample.labels, new_size, new_size)
    return SegSample(image=img, labels=labels)
