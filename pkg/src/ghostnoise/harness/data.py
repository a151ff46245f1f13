"""Datasets: synthetic Gaussian blobs and big-endian IDX (MNIST) files."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Base class for malformed IDX files."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]


def split_dataset(x, y, num_classes: int, rng: np.random.Generator, eval_fraction: float = 0.1) -> Dataset:
    """Shuffle and split into train / val / test with ``eval_fraction`` each for val and test."""
    n = x.shape[0]
    perm = rng.permutation(n)
    n_eval = int(round(eval_fraction * n))
    val, test, train = perm[:n_eval], perm[n_eval:2 * n_eval], perm[2 * n_eval:]
    return Dataset(x[train], y[train], x[val], y[val], x[test], y[test], num_classes)


def make_blobs(n: int, dim: int, num_classes: int, class_separation: float, label_noise: float,
               rng: np.random.Generator, eval_fraction: float = 0.1) -> Dataset:
    """Unit-variance Gaussian classes around centres on a sphere of radius ``class_separation``.

    A ``label_noise`` fraction of labels is resampled uniformly over all classes.
    """
    if not n >= num_classes >= 2:
        raise ValueError("need n >= num_classes >= 2")
    if not 0.0 <= label_noise <= 1.0:
        raise ValueError("label_noise must lie in [0, 1]")
    centres = rng.standard_normal((num_classes, dim))
    centres *= class_separation / np.linalg.norm(centres, axis=1, keepdims=True)
    y = rng.integers(0, num_classes, size=n)
    x = centres[y] + rng.standard_normal((n, dim))
    noisy = rng.random(n) < label_noise
    y = np.where(noisy, rng.integers(0, num_classes, size=n), y)
    return split_dataset(x, y, num_classes, rng, eval_fraction)


def _read_header(buf: bytes, path, magic: int, ndim: int):
    if len(buf) < 4 + 4 * ndim:
        raise IdxTruncatedError(f"{path}: file too short for IDX header")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(">" + "I" * ndim, buf[4:4 + 4 * ndim])
    payload = buf[4 + 4 * ndim:]
    expected = int(np.prod(dims))
    if len(payload) < expected:
        raise IdxTruncatedError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    return dims, payload[:expected]


def load_idx(images_path, labels_path):
    """Parse an IDX image file and label file.

    Returns ``(x, y)`` with images flattened to (n, rows * cols) and scaled to [0, 1].
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    (n_img, rows, cols), pixels = _read_header(images_path.read_bytes(), images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,), labels = _read_header(labels_path.read_bytes(), labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise IdxCountMismatchError(f"{n_img} images but {n_lab} labels")
    x = np.frombuffer(pixels, dtype=np.uint8).reshape(n_img, rows * cols).astype(np.float64) / 255.0
    y = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    return x, y


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write uint8 (n, rows, cols) images and (n,) labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())
