"""Datasets: synthetic generators and the IDX image codec.

Three desk-scale families cover the experiments: noisy scalar regression,
Gaussian blobs for k-way classification, and 28x28 grayscale digits built
from stroke glyphs (translated, scaled in brightness, and noised) so image
experiments run without any external download. Digit pixels are quantized
to the 8-bit grid, which makes an IDX round trip bit-exact.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError
from .tensor import as_tensor


@dataclass
class Dataset:
    """Immutable-by-convention bundle of inputs, targets, and stable ids."""

    inputs: np.ndarray
    targets: np.ndarray
    ids: np.ndarray = None
    classes: int = None  # None marks a regression target
    kind: str = "dataset"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs)
        self.targets = np.asarray(self.targets)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionError(
                f"{self.inputs.shape[0]} inputs vs {self.targets.shape[0]} targets"
            )
        if self.ids is None:
            self.ids = np.arange(self.inputs.shape[0])
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.shape[0] != self.inputs.shape[0]:
            raise DimensionError("ids must align with inputs")

    @property
    def n(self):
        return self.inputs.shape[0]

    def take(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return self.inputs[ids], self.targets[ids]

    def label_counts(self):
        if self.classes is None:
            raise DimensionError("label_counts on a regression dataset")
        return np.bincount(self.targets.astype(np.int64), minlength=self.classes)


def generate_linreg_data(n, gen, slope=2.0, intercept=17.0, noise=1.0, x_range=(0.0, 10.0)):
    """y = slope * x + intercept + N(0, noise^2), x uniform on x_range."""
    x = gen.uniform(x_range[0], x_range[1], size=n)
    y = slope * x + intercept + noise * gen.standard_normal(n)
    return Dataset(x, y, kind="linreg")


def _balanced_labels(n, classes, gen):
    reps = -(-n // classes)  # ceil
    labels = np.tile(np.arange(classes), reps)[:n]
    return labels[gen.permutation(n)]


def blob_centers(classes, dim=2, separation=4.0):
    """Fixed centers on a circle of radius ``separation`` (padded for dim > 2)."""
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers = np.zeros((classes, dim))
    centers[:, 0] = separation * np.cos(angles)
    centers[:, 1 % dim] = separation * np.sin(angles)
    return centers


def generate_blobs(n, classes, gen, separation=4.0, dim=2, spread=1.0):
    """Isotropic Gaussian blobs, classes balanced to within one example."""
    if classes < 2:
        raise DimensionError("blobs need at least 2 classes")
    labels = _balanced_labels(n, classes, gen)
    centers = blob_centers(classes, dim, separation)
    x = centers[labels] + spread * gen.standard_normal((n, dim))
    return Dataset(x, labels, classes=classes, kind="blobs")


# 7x5 stroke glyphs for the synthetic digit images
_GLYPHS = [
    "01110 10001 10011 10101 11001 10001 01110",
    "00100 01100 00100 00100 00100 00100 01110",
    "01110 10001 00001 00010 00100 01000 11111",
    "01110 10001 00001 00110 00001 10001 01110",
    "00010 00110 01010 10010 11111 00010 00010",
    "11111 10000 11110 00001 00001 10001 01110",
    "00110 01000 10000 11110 10001 10001 01110",
    "11111 00001 00010 00100 00100 01000 01000",
    "01110 10001 10001 01110 10001 10001 01110",
    "01110 10001 10001 01111 00001 00010 01100",
]


def _glyph_array(digit):
    rows = _GLYPHS[digit].split()
    return np.array([[c == "1" for c in row] for row in rows], dtype=np.float64)


def generate_digits(n, gen, image_hw=28, noise=0.08, glare=0.0):
    """Synthetic 10-class digit images on the 8-bit grayscale grid.

    Each image is a 3x-upscaled glyph (21x15) dropped at a random offset
    with random brightness, plus clipped Gaussian pixel noise. Pixels are
    rounded to multiples of 1/255 so saving to IDX and loading back
    reproduces the array exactly.

    glare adds nuisance appearance variety: that fraction of images get a
    bright band across the top (random height 5..10 rows, random intensity),
    uncorrelated with the label, the way scanned or photographed documents
    pick up overexposure along an edge. glare=0 draws nothing extra, so
    existing streams are unchanged.
    """
    labels = _balanced_labels(n, 10, gen)
    scale = 3
    glyphs = [np.kron(_glyph_array(d), np.ones((scale, scale))) for d in range(10)]
    gh, gw = glyphs[0].shape
    if image_hw < max(gh, gw):
        raise DimensionError(f"image_hw {image_hw} smaller than glyph {gh}x{gw}")
    images = np.zeros((n, image_hw, image_hw))
    offs_r = gen.integers(0, image_hw - gh + 1, size=n)
    offs_c = gen.integers(0, image_hw - gw + 1, size=n)
    amp = gen.uniform(0.7, 1.0, size=n)
    for i in range(n):
        r, c = offs_r[i], offs_c[i]
        images[i, r : r + gh, c : c + gw] = amp[i] * glyphs[labels[i]]
    if glare > 0.0:
        hit = gen.random(n) < glare
        heights = gen.integers(5, 11, size=n)
        intensity = gen.uniform(0.7, 1.0, size=n)
        for i in np.flatnonzero(hit):
            h = heights[i]
            images[i, :h] = np.maximum(images[i, :h], intensity[i])
    images += noise * gen.standard_normal(images.shape)
    images = np.clip(images, 0.0, 1.0)
    images = np.round(images * 255.0) / 255.0
    return Dataset(images, labels, classes=10, kind="digits")


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_exact(fh, count, path, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(f"{path}: truncated {what} ({len(buf)} of {count} bytes)")
    return buf


def load_idx(images_path, labels_path):
    """Read an IDX image/label file pair into a Dataset.

    Big-endian headers: images are magic 0x00000803 then (count, rows,
    cols); labels are magic 0x00000801 then (count,). Payload is unsigned
    bytes; pixels map to [0, 1] as value / 255.
    """
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != _IDX_IMAGES_MAGIC:
            raise FormatError(f"{images_path}: bad image magic 0x{magic:08x}")
        raw = _read_exact(fh, count * rows * cols, images_path, "pixel payload")
        if fh.read(1):
            raise FormatError(f"{images_path}: trailing bytes after payload")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols) / 255.0

    with open(labels_path, "rb") as fh:
        magic, lcount = struct.unpack(">II", _read_exact(fh, 8, labels_path, "header"))
        if magic != _IDX_LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad label magic 0x{magic:08x}")
        raw = _read_exact(fh, lcount, labels_path, "label payload")
        if fh.read(1):
            raise FormatError(f"{labels_path}: trailing bytes after payload")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if lcount != count:
        raise FormatError(f"{count} images but {lcount} labels")
    classes = int(labels.max()) + 1 if count else 0
    return Dataset(images, labels, classes=max(classes, 2), kind="idx")


def save_idx(dataset, images_path, labels_path):
    """Write images/labels as an IDX pair; pixels are rounded to bytes."""
    images = as_tensor(dataset.inputs, "images")
    if images.ndim != 3:
        raise DimensionError(f"save_idx expects (n, rows, cols) images, got {images.shape}")
    if images.size and (images.min() < 0.0 or images.max() > 1.0):
        raise FormatError("pixels must lie in [0, 1] to quantize to bytes")
    n, rows, cols = images.shape
    labels = np.asarray(dataset.targets, dtype=np.int64)
    if labels.min() < 0 or labels.max() > 255:
        raise FormatError("labels out of byte range")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", _IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(np.round(images * 255.0).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", _IDX_LABELS_MAGIC, n))
        fh.write(labels.astype(np.uint8).tobytes())
