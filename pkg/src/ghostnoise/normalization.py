"""Batch, ghost-batch, exclusive and layer normalization (no learned affine)."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor import ChannelStats, Tensor4, channel_stats


class DivisibilityError(ValueError):
    """Ghost batch size does not divide the batch size."""


@dataclass(frozen=True)
class NormConfig:
    eps: float = 1e-5
    ghost_size: int = 1
    ema_decay: float = 0.9

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.ghost_size < 1:
            raise ValueError("ghost_size must be >= 1")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")


@dataclass(frozen=True)
class RunningStats:
    """Exponential moving averages of batch statistics used at inference."""

    mean: np.ndarray
    var: np.ndarray
    update_count: int = 0

    @classmethod
    def empty(cls, channels: int) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels), 0)


def _per_channel(v: np.ndarray) -> np.ndarray:
    return v[None, :, None, None]


def _ghost_view(x: Tensor4, ghost_size: int) -> np.ndarray:
    batch = x.shape[0]
    if ghost_size < 1 or batch % ghost_size:
        raise DivisibilityError(f"ghost size {ghost_size} does not divide batch size {batch}")
    return x.reshape(batch // ghost_size, ghost_size, *x.shape[1:])


def batch_norm_train(x: Tensor4, eps: float) -> tuple[Tensor4, ChannelStats]:
    stats = channel_stats(x)
    out = (x - _per_channel(stats.mean)) / np.sqrt(_per_channel(stats.var) + eps)
    return out, stats


def batch_norm_infer(x: Tensor4, running: RunningStats, eps: float) -> Tensor4:
    if running.update_count < 1:
        raise RuntimeError("running statistics have not been initialized by a training step")
    return (x - _per_channel(running.mean)) / np.sqrt(_per_channel(running.var) + eps)


def update_running(running: RunningStats, stats: ChannelStats, decay: float = 0.9) -> RunningStats:
    """EMA update; the first update copies the batch statistics exactly."""
    if running.mean.shape != stats.mean.shape:
        raise ValueError("running statistics and batch statistics disagree in channel count")
    if running.update_count == 0:
        return RunningStats(stats.mean.copy(), stats.var.copy(), 1)
    mean = decay * running.mean + (1.0 - decay) * stats.mean
    var = decay * running.var + (1.0 - decay) * stats.var
    return RunningStats(mean, var, running.update_count + 1)


def ghost_stats(x: Tensor4, ghost_size: int) -> ChannelStats:
    """Per-ghost-batch channel statistics, each of shape (G, C)."""
    g = _ghost_view(x, ghost_size)
    mean = g.mean(axis=(1, 3, 4))
    var = ((g - mean[:, None, :, None, None]) ** 2).mean(axis=(1, 3, 4))
    return ChannelStats(mean, var)


def ghost_batch_norm(x: Tensor4, ghost_size: int, eps: float) -> Tensor4:
    """Normalize each contiguous block of ``ghost_size`` samples by its own statistics."""
    g = _ghost_view(x, ghost_size)
    mean, var = ghost_stats(x, ghost_size)
    out = (g - mean[:, None, :, None, None]) / np.sqrt(var[:, None, :, None, None] + eps)
    return out.reshape(x.shape)


def exclusive_stats(x: Tensor4, ghost_size: int) -> ChannelStats:
    """Leave-one-out mean and variance of every sample within its ghost batch, shape (B, C).

    Sums run over the other ``ghost_size - 1`` samples and all spatial positions.
    Data are centred on the ghost mean first to limit cancellation.
    """
    if ghost_size < 2:
        raise ValueError("exclusive normalization needs ghost_size >= 2")
    g = _ghost_view(x, ghost_size)
    spatial = x.shape[2] * x.shape[3]
    count = (ghost_size - 1) * spatial
    centre = g.mean(axis=(1, 3, 4), keepdims=True)
    d = g - centre
    s1 = d.sum(axis=(3, 4))
    s2 = (d * d).sum(axis=(3, 4))
    loo_mean = (s1.sum(axis=1, keepdims=True) - s1) / count
    loo_var = (s2.sum(axis=1, keepdims=True) - s2) / count - loo_mean**2
    loo_var = np.maximum(loo_var, 0.0)
    mean = loo_mean + centre[:, :, :, 0, 0]
    return ChannelStats(mean.reshape(x.shape[:2]), loo_var.reshape(x.shape[:2]))


def exclusive_batch_norm(x: Tensor4, ghost_size: int, eps: float) -> Tensor4:
    """Normalize sample k of each ghost batch by statistics of the other samples only.

    The output is not bounded: when the other samples agree the divisor
    collapses to sqrt(eps).
    """
    mean, var = exclusive_stats(x, ghost_size)
    return (x - mean[:, :, None, None]) / np.sqrt(var[:, :, None, None] + eps)


def layer_norm(x: Tensor4, eps: float) -> Tensor4:
    mean = x.mean(axis=(1, 2, 3), keepdims=True)
    var = ((x - mean) ** 2).mean(axis=(1, 2, 3), keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


class DecompositionResiduals(NamedTuple):
    equivalence: float
    mean: float
    std: float


VARIANCE_FLOOR = 0.1


def gbn_decomposition_residuals(x: Tensor4, ghost_size: int, eps: float = 1e-10) -> DecompositionResiduals:
    """Residuals of GBN(X) = GBN(BN(X)) and of the ghost statistics identities.

    Ghost statistics of X are compared with ``mu + sigma * mu_hat`` and
    ``sigma * sigma_hat`` where the hatted statistics come from BN(X).
    """
    if eps > 1e-10:
        raise ValueError("decomposition residuals are only meaningful for eps <= 1e-10")
    gmean, gvar = ghost_stats(x, ghost_size)
    if gvar.min() < VARIANCE_FLOOR:
        raise ValueError(f"ghost batch variance {gvar.min():.3g} below floor {VARIANCE_FLOOR}")

    xhat, stats = batch_norm_train(x, eps)
    direct = ghost_batch_norm(x, ghost_size, eps)
    double = ghost_batch_norm(xhat, ghost_size, eps)

    sigma = np.sqrt(stats.var + eps)
    hat_mean, hat_var = ghost_stats(xhat, ghost_size)
    mean_res = np.abs(gmean - (stats.mean + sigma * hat_mean)).max()
    std_res = np.abs(np.sqrt(gvar) - sigma * np.sqrt(hat_var)).max()
    return DecompositionResiduals(float(np.abs(direct - double).max()), float(mean_res), float(std_res))
