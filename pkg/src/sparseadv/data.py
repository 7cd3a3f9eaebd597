"""Labelled image datasets: container, IDX (MNIST) reader and synthetic blobs."""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Malformed or inconsistent data file."""


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) in [0, 1]
    labels: np.ndarray  # (N,) int
    n_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[-1] not in (1, 3):
            raise ValueError(f"images must have shape (N, H, W, C) with C in (1, 3), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("one label per image is required")
        if np.any((self.labels < 0) | (self.labels >= self.n_classes)):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.images.shape[1:]

    def subset(self, n):
        return Dataset(self.images[:n], self.labels[:n], self.n_classes)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx_payload(path, magic, ndim):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4 + 4 * ndim:
        raise DataFormatError(f"{path}: truncated IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise DataFormatError(f"{path}: bad IDX magic number 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    expected = int(np.prod(dims))
    payload = raw[4 + 4 * ndim:]
    if len(payload) != expected:
        raise DataFormatError(f"{path}: payload has {len(payload)} bytes, header declares {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def read_idx(images_path, labels_path, n_classes=10):
    """Read an IDX image/label file pair (optionally gzipped) as a gray dataset.

    Pixel bytes are scaled by 1/255.
    """
    images = _read_idx_payload(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx_payload(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= n_classes:
        raise DataFormatError(f"label {labels.max()} out of range for {n_classes} classes")
    return Dataset(images[..., None] / 255.0, labels.astype(np.int64), n_classes)


def write_idx(dataset, images_path, labels_path):
    """Write a gray dataset as an IDX pair (pixels rounded to bytes)."""
    if dataset.shape[-1] != 1:
        raise ValueError("IDX export supports gray images only")
    n, h, w, _ = dataset.images.shape
    pixels = np.round(dataset.images[..., 0] * 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def _templates(n_classes, shape, rng, min_separation=1.0, max_tries=1000):
    for _ in range(max_tries):
        t = rng.uniform(0.2, 0.8, size=(n_classes, *shape))
        flat = t.reshape(n_classes, -1)
        dist = np.linalg.norm(flat[:, None] - flat[None], axis=-1)
        if n_classes < 2 or dist[np.triu_indices(n_classes, 1)].min() >= min_separation:
            return t
    raise RuntimeError(f"could not draw {n_classes} templates separated by {min_separation} in {max_tries} tries")


def _samples(templates, per_class, rng, noise=0.05):
    n_classes = templates.shape[0]
    labels = np.repeat(np.arange(n_classes), per_class)
    images = templates[labels] + rng.uniform(-noise, noise, size=(len(labels), *templates.shape[1:]))
    return Dataset(np.clip(images, 0.0, 1.0), labels, n_classes)


def gen_synthetic_split(n_classes, per_class, test_per_class, shape, seed):
    """Train and test sets of class-conditional blob images sharing templates.

    Every class has a fixed random template in [0.2, 0.8]; samples add
    uniform noise of amplitude 0.05 and are clipped to [0, 1].  Templates are
    redrawn until all pairs are at l2 distance >= 1.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or shape[2] not in (1, 3) or shape[0] > 16 or shape[1] > 16:
        raise ValueError(f"shape must be HxWxC with H, W <= 16 and C in (1, 3), got {shape}")
    template_seq, train_seq, test_seq = np.random.SeedSequence(seed).spawn(3)
    templates = _templates(n_classes, shape, np.random.default_rng(template_seq))
    train = _samples(templates, per_class, np.random.default_rng(train_seq))
    test = _samples(templates, test_per_class, np.random.default_rng(test_seq))
    return train, test


def gen_synthetic(n_classes, per_class, shape, seed):
    return gen_synthetic_split(n_classes, per_class, 0, shape, seed)[0]
