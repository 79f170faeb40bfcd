"""Dataset ingestion and image output: IDX parsing/serialization, synthetic
ground-truth datasets, and PGM saliency images."""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised for malformed IDX byte streams."""


@dataclass
class Dataset:
    """Flat inputs in [0, 1] with integer class labels.

    `spatial_shape` is set for image data so masks can be rendered.
    `block` records the ground-truth explanation region (flat indices) for
    planted_block data.
    """

    inputs: np.ndarray
    labels: np.ndarray
    spatial_shape: Optional[Tuple[int, int]] = None
    block: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels have different lengths")
        if self.inputs.size and (self.inputs.min() < 0 or self.inputs.max() > 1):
            raise ValueError("input values must lie in [0, 1]")

    def __len__(self):
        return len(self.inputs)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]


def parse_idx(data: bytes) -> np.ndarray:
    """Parse one IDX payload.

    Image files (magic 0x803) give a float64 (n, rows, cols) array scaled to
    [0, 1]; label files (magic 0x801) give an int array of length n.
    """
    if len(data) < 4:
        raise IdxFormatError("stream shorter than the 4-byte magic")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == IDX_IMAGE_MAGIC:
        if len(data) < 16:
            raise IdxFormatError("image stream truncated before dimensions")
        n, rows, cols = struct.unpack(">III", data[4:16])
        expected = 16 + n * rows * cols
        if len(data) != expected:
            raise IdxFormatError(f"image payload has {len(data)} bytes, "
                                 f"expected {expected}")
        pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
        return pixels.reshape(n, rows, cols).astype(np.float64) / 255.0
    if magic == IDX_LABEL_MAGIC:
        if len(data) < 8:
            raise IdxFormatError("label stream truncated before count")
        n = struct.unpack(">I", data[4:8])[0]
        expected = 8 + n
        if len(data) != expected:
            raise IdxFormatError(f"label payload has {len(data)} bytes, "
                                 f"expected {expected}")
        return np.frombuffer(data, dtype=np.uint8, offset=8).astype(int)
    raise IdxFormatError(f"unrecognized IDX magic 0x{magic:08x}")


def serialize_idx(array: np.ndarray) -> bytes:
    """Inverse of parse_idx: 3-d float arrays become image files, 1-d integer
    arrays become label files."""
    array = np.asarray(array)
    if array.ndim == 3:
        n, rows, cols = array.shape
        pixels = np.rint(array * 255.0).astype(np.uint8)
        return struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols) + pixels.tobytes()
    if array.ndim == 1:
        labels = array.astype(np.uint8)
        return struct.pack(">II", IDX_LABEL_MAGIC, len(labels)) + labels.tobytes()
    raise IdxFormatError(f"cannot serialize array of ndim {array.ndim}")


def load_idx_dataset(image_path: str, label_path: str,
                     limit: Optional[int] = None) -> Dataset:
    with open(image_path, "rb") as f:
        images = parse_idx(f.read())
    with open(label_path, "rb") as f:
        labels = parse_idx(f.read())
    if images.ndim != 3:
        raise IdxFormatError(f"{image_path} is not an IDX image file")
    if labels.ndim != 1:
        raise IdxFormatError(f"{label_path} is not an IDX label file")
    if len(images) != len(labels):
        raise IdxFormatError("image and label counts differ")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    n, rows, cols = images.shape
    return Dataset(images.reshape(n, rows * cols), labels, (rows, cols))


def gen_synthetic(kind: str, params: dict, seed: int) -> Dataset:
    """Deterministic synthetic datasets with known structure.

    gaussian_blobs: isotropic Gaussian classes in [0, 1]^m.
    planted_block: images whose class is decided solely by the intensity of
    a fixed pixel block; the block is recorded as the ground truth.
    """
    if kind == "gaussian_blobs":
        return _gaussian_blobs(seed=seed, **params)
    if kind == "planted_block":
        return _planted_block(seed=seed, **params)
    raise ValueError(f"unknown synthetic dataset kind {kind!r}")


def _gaussian_blobs(m: int, n: int, classes: int = 2, separation: float = 0.2,
                    noise: float = 0.05, seed: int = 0) -> Dataset:
    if m < 1 or n < classes or classes < 1:
        raise ValueError("need m >= 1 and n >= classes >= 1")
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(classes, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    labels = np.arange(n) % classes
    centers = 0.5 + separation * dirs[labels]
    x = np.clip(centers + rng.normal(0.0, noise, size=(n, m)), 0.0, 1.0)
    return Dataset(x, labels)


def _planted_block(height: int, width: int, n: int,
                   block: Tuple[int, int, int, int] = (0, 0, 2, 2),
                   bg_noise: float = 0.02, seed: int = 0) -> Dataset:
    """Two classes that differ only inside `block` = (row, col, bh, bw).

    Block pixels stay below 0.5 for class 0 and above for class 1, with wide
    within-class variation so embeddings retain intensity information; the
    background is identically distributed for both classes."""
    r0, c0, bh, bw = block
    if r0 + bh > height or c0 + bw > width:
        raise ValueError(f"block {block} does not fit in {height}x{width}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    imgs = np.clip(rng.uniform(0.5 - bg_noise, 0.5 + bg_noise,
                               size=(n, height, width)), 0.0, 1.0)
    lo = rng.uniform(0.05, 0.45, size=(n, bh, bw))
    hi = rng.uniform(0.55, 0.95, size=(n, bh, bw))
    patch = np.where(labels[:, None, None] == 0, lo, hi)
    imgs[:, r0:r0 + bh, c0:c0 + bw] = patch
    mask = np.zeros((height, width), dtype=bool)
    mask[r0:r0 + bh, c0:c0 + bw] = True
    return Dataset(imgs.reshape(n, height * width), labels, (height, width),
                   block=np.flatnonzero(mask.reshape(-1)))


def _atomic_write(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm(image: np.ndarray, path: str) -> None:
    """Binary PGM (P5, maxval 255) from a [0, 1] grayscale image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {image.shape}")
    h, w = image.shape
    body = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    _atomic_write(path, f"P5\n{w} {h}\n255\n".encode() + body.tobytes())


def write_mask_images(original: np.ndarray, reconstruction: np.ndarray,
                      mask: np.ndarray, spatial_shape: Tuple[int, int],
                      prefix: str) -> list:
    """Emit the explanation quadruple as four PGM files.

    <prefix>_original, _reconstruction, _overlay (original with masked pixels
    forced to maxval), and _mask."""
    h, w = spatial_shape
    m = h * w
    for name, arr in (("original", original), ("reconstruction", reconstruction),
                      ("mask", mask)):
        if np.asarray(arr).size != m:
            raise ValueError(f"{name} has {np.asarray(arr).size} values, "
                             f"expected {m} for shape {spatial_shape}")
    original = np.asarray(original, float).reshape(h, w)
    reconstruction = np.asarray(reconstruction, float).reshape(h, w)
    mask = np.asarray(mask, float).reshape(h, w)
    overlay = np.where(mask > 0, 1.0, original)
    paths = []
    for name, img in (("original", original), ("reconstruction", reconstruction),
                      ("overlay", overlay), ("mask", mask)):
        p = f"{prefix}_{name}.pgm"
        write_pgm(img, p)
        paths.append(p)
    return paths
