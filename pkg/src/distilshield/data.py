"""Datasets: IDX image files, a synthetic desk-scale corpus, and splits."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, ParameterError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Grayscale images in [0, 1] with integer class labels."""

    images: np.ndarray  # (n, h, w) float64
    labels: np.ndarray  # (n,) int64
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise DataError(f"images must be (n, h, w), got shape {self.images.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.images.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.images.size:
            if not np.isfinite(self.images).all():
                raise DataError("images contain non-finite pixels")
            lo, hi = self.images.min(), self.images.max()
            if lo < 0.0 or hi > 1.0:
                raise DataError(f"pixels must lie in [0, 1], got range [{lo}, {hi}]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError(
                f"labels must lie in [0, {self.class_count}), got "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self):
        return self.images.shape[0]

    @property
    def flat(self):
        """Images flattened row-major to (n, h*w) for dense models."""
        return self.images.reshape(self.images.shape[0], -1)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, indices):
        return Dataset(self.images[indices], self.labels[indices], self.class_count)

    def with_flat_images(self, flat):
        """Same labels, images replaced by flattened pixel rows."""
        images = np.asarray(flat, dtype=np.float64).reshape(
            (-1,) + tuple(self.image_shape)
        )
        return Dataset(images, self.labels.copy(), self.class_count)


@dataclass
class SyntheticSpec:
    """Knobs for the template-based synthetic corpus.

    ``amplitude_min``/``amplitude_max`` scale each example's template by a
    per-example uniform draw; the degenerate default (1, 1) keeps classes
    noise-free apart from the Gaussian pixel noise.
    """

    image_side: int = 16
    class_count: int = 4
    samples_per_class: int = 100
    noise_sigma: float = 0.02
    seed: int = 0
    amplitude_min: float = 1.0
    amplitude_max: float = 1.0


def class_templates(side, count):
    """Bar/cross/diagonal patterns, one (side, side) array per class."""
    if side < 4:
        raise ParameterError(f"image_side must be >= 4, got {side}")
    mid = side // 2
    horizontal = np.zeros((side, side))
    horizontal[mid - 1 : mid + 1, :] = 1.0
    vertical = np.zeros((side, side))
    vertical[:, mid - 1 : mid + 1] = 1.0
    cross = np.maximum(horizontal, vertical)
    diagonal = np.eye(side)
    diagonal[1:, :-1] += np.eye(side - 1)
    diagonal = np.minimum(diagonal, 1.0)
    templates = [horizontal, vertical, cross, diagonal]
    if not 2 <= count <= len(templates):
        raise ParameterError(
            f"class_count must be in [2, {len(templates)}], got {count}"
        )
    return templates[:count]


def generate_synthetic(spec) -> Dataset:
    """Deterministic synthetic corpus: scaled class templates plus clipped noise."""
    if spec.samples_per_class < 1:
        raise ParameterError("samples_per_class must be >= 1")
    if spec.noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    if not (0 < spec.amplitude_min <= spec.amplitude_max <= 1.0):
        raise ParameterError("need 0 < amplitude_min <= amplitude_max <= 1")
    templates = class_templates(spec.image_side, spec.class_count)
    rng = np.random.default_rng(spec.seed)
    images = []
    labels = []
    for cls, template in enumerate(templates):
        amps = rng.uniform(spec.amplitude_min, spec.amplitude_max, size=spec.samples_per_class)
        noise = rng.normal(0.0, spec.noise_sigma, size=(spec.samples_per_class,) + template.shape)
        batch = amps[:, None, None] * template[None, :, :]
        if spec.noise_sigma > 0:
            batch = batch + noise
        images.append(np.clip(batch, 0.0, 1.0))
        labels.append(np.full(spec.samples_per_class, cls, dtype=np.int64))
    return Dataset(np.concatenate(images), np.concatenate(labels), spec.class_count)


def _read_exact(f, count, path):
    buf = f.read(count)
    if len(buf) < count:
        raise IOError(f"truncated IDX file: {path}")
    return buf


def load_idx(images_path, labels_path) -> Dataset:
    """Parse big-endian IDX image/label files; pixels scaled to [0, 1] by /255."""
    with open(images_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        n, rows, cols = struct.unpack(">III", _read_exact(f, 12, images_path))
        raw = _read_exact(f, n * rows * cols, images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    with open(labels_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        (count,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        raw = _read_exact(f, count, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if count != n:
        raise DataError(f"{n} images but {count} labels")
    class_count = int(labels.max()) + 1 if n else 0
    return Dataset(pixels.astype(np.float64) / 255.0, labels, class_count)


def save_idx(dataset, images_path, labels_path):
    """Write IDX files; pixels are rounded to the nearest /255 level."""
    n = len(dataset)
    h, w = dataset.image_shape
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    if dataset.class_count > 256:
        raise DataError("IDX labels are single bytes; class_count must be <= 256")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def split(dataset, fractions, seed):
    """Seeded shuffle, then contiguous parts of size floor(f_i * n).

    The last part absorbs the rounding remainder; parts are disjoint and
    their union is the dataset.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions):
        raise ParameterError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [int(np.floor(f * n + 1e-9)) for f in fractions[:-1]]
    sizes.append(n - sum(sizes))
    parts = []
    start = 0
    for size in sizes:
        parts.append(dataset.subset(perm[start : start + size]))
        start += size
    return parts


def write_manifest(dataset, path, poison_flags=None):
    """CSV companion for an exported set: index, label, optional poison flag."""
    with open(path, "w", encoding="ascii", newline="\n") as f:
        if poison_flags is None:
            f.write("index,label\n")
            for i, label in enumerate(dataset.labels):
                f.write(f"{i},{int(label)}\n")
        else:
            f.write("index,label,poisoned\n")
            for i, label in enumerate(dataset.labels):
                f.write(f"{i},{int(label)},{int(poison_flags[i])}\n")
