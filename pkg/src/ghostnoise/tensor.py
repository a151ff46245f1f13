"""Rank-4 activation arrays, axis-wise statistics and seeded random streams.

Activations are plain ``numpy.ndarray`` objects of dtype float64 laid out as
(sample, channel, height, width).  Fully connected activations use
height = width = 1.
"""

from typing import NamedTuple, Sequence

import numpy as np

Tensor4 = np.ndarray

RNG_ALGORITHM = "numpy.PCG64 seeded by SeedSequence(seed, spawn_key=(stream_id,))"


class ChannelStats(NamedTuple):
    """Per-channel mean and biased variance over (sample, height, width)."""

    mean: np.ndarray
    var: np.ndarray


class PerSampleChannelStats(NamedTuple):
    """Spatial mean and biased variance of every (sample, channel) slice, shape (B, C)."""

    mean: np.ndarray
    var: np.ndarray


def as_tensor4(x) -> Tensor4:
    """Validate ``x`` as a finite (B, C, H, W) array and return a float64 copy-free view when possible."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"expected a rank-4 array (B, C, H, W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"all dimensions must be >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    return np.ascontiguousarray(arr)


def from_matrix(x) -> Tensor4:
    """Lift a (B, C) matrix of fully connected activations to (B, C, 1, 1)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a (B, C) matrix, got shape {arr.shape}")
    return as_tensor4(arr[:, :, None, None])


def channel_stats(x: Tensor4) -> ChannelStats:
    mean = x.mean(axis=(0, 2, 3))
    var = ((x - mean[None, :, None, None]) ** 2).mean(axis=(0, 2, 3))
    return ChannelStats(mean, var)


def spatial_stats(x: Tensor4) -> PerSampleChannelStats:
    mean = x.mean(axis=(2, 3))
    var = ((x - mean[:, :, None, None]) ** 2).mean(axis=(2, 3))
    return PerSampleChannelStats(mean, var)


def gather_samples(x: Tensor4, indices: Sequence[int]) -> Tensor4:
    """Copy the samples ``indices`` (duplicates allowed) into a new batch."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("indices must be a non-empty 1-d sequence")
    batch = x.shape[0]
    if idx.min() < 0 or idx.max() >= batch:
        raise IndexError(f"sample index out of range [0, {batch})")
    return x[idx].copy()


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream_id)``.

    Equal pairs replay the same sequence; distinct stream ids are spawned
    children of one SeedSequence and therefore statistically independent.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))
