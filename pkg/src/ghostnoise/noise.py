"""Training-time noise injectors.

Every injector is an affine map with constant coefficients,
``out = (x - shift) * gain``, whose coefficients are drawn without any
gradient flowing through the draw.  :class:`Injection` stores those
coefficients so a forward pass can be replayed exactly and differentiated as
an elementwise scaling.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sampling import sample_chi2
from .tensor import Tensor4

MODES = ("full", "shift_only", "scale_only")
SAMPLINGS = ("empirical", "analytical")
AGNI_GRANULARITIES = ("per_sample_channel", "per_channel")
DROPOUT_GRANULARITIES = ("elementwise", "channelwise")


@dataclass(frozen=True)
class GhostNoiseConfig:
    ghost_size: int
    eps: float = 1e-3
    mode: str = "full"
    sampling: str = "empirical"
    granularity: str = "per_sample_channel"

    def __post_init__(self):
        if self.ghost_size < 1:
            raise ValueError("ghost_size must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}")
        if self.granularity not in AGNI_GRANULARITIES:
            raise ValueError(f"granularity must be one of {AGNI_GRANULARITIES}")


@dataclass
class NoiseDraw:
    """Ghost noise realization for one batch.

    ``shift`` and ``scale`` have shape (B, C); the injected map is
    ``(x - shift) / scale`` broadcast over the spatial axes.
    """

    shift: np.ndarray
    scale: np.ndarray
    ghost_indices: Optional[np.ndarray] = None

    def restrict(self, mode: str) -> "NoiseDraw":
        if mode == "shift_only":
            return NoiseDraw(self.shift, np.ones_like(self.scale), self.ghost_indices)
        if mode == "scale_only":
            return NoiseDraw(np.zeros_like(self.shift), self.scale, self.ghost_indices)
        return self


@dataclass
class Injection:
    """Constant coefficients of ``(x - shift) * gain``; arrays broadcast against x."""

    shift: np.ndarray
    gain: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.shift) * self.gain

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self.gain

    @classmethod
    def from_draw(cls, draw: NoiseDraw, ndim: int = 4) -> "Injection":
        pad = (slice(None), slice(None)) + (None,) * (ndim - 2)
        return cls(draw.shift[pad], 1.0 / draw.scale[pad])


# ---------------------------------------------------------------------------
# sample-based ghost noise


def ghost_counts(indices: np.ndarray, batch: int) -> np.ndarray:
    """(B, B) matrix whose row b counts how often each sample appears in ghost batch b."""
    rows = np.repeat(np.arange(indices.shape[0]), indices.shape[1])
    flat = np.bincount(rows * batch + indices.ravel(), minlength=indices.shape[0] * batch)
    return flat.reshape(indices.shape[0], batch).astype(np.float64)


def draw_ghost_stats(x: Tensor4, ghost_size: int, rng: np.random.Generator):
    """Draw one with-replacement ghost batch per sample and return its statistics.

    Returns ``(m, s2, indices)``: biased mean and variance of each ghost batch
    over its samples and all spatial positions, shape (B, C), and the (B, N)
    drawn indices.  Statistics are assembled from per-sample moments via the
    law of total variance, measured relative to sample 0 so that a batch of
    identical samples yields the batch statistics bit for bit.
    """
    batch = x.shape[0]
    indices = rng.integers(0, batch, size=(batch, ghost_size))
    m, s2 = ghost_moments(x, indices)[:2]
    return m, s2, indices


def ghost_moments(x: Tensor4, indices: np.ndarray):
    """Return ``(m, s2, shift, mu, var)`` for ghost batches given by ``indices``, each (B, C)."""
    return ghost_moments_from_counts(x, ghost_counts(indices, x.shape[0]))


def ghost_moments_from_counts(x: Tensor4, w: np.ndarray):
    """As :func:`ghost_moments` with ghost batches given by a (G, B) count matrix."""
    n = w[0].sum()
    c = x.shape[1]
    if x.shape[2] * x.shape[3] == 1:
        smean = x[:, :, 0, 0]
        svar = np.zeros_like(smean)
    else:
        smean = x.mean(axis=(2, 3))
        svar = ((x - smean[:, :, None, None]) ** 2).mean(axis=(2, 3))
    d = smean - smean[0]
    dv = svar - svar[0]
    parts = np.concatenate([d, dv, d * d], axis=1)

    batch_d, batch_dv, batch_dd = np.split(parts.mean(axis=0), [c, 2 * c])
    batch_var = svar[0] + batch_dv + np.maximum(batch_dd - batch_d**2, 0.0)
    ghost_d, ghost_dv, ghost_dd = np.split(w @ parts / n, [c, 2 * c], axis=1)
    ghost_var = svar[0] + ghost_dv + np.maximum(ghost_dd - ghost_d**2, 0.0)

    shift = ghost_d - batch_d
    mean = smean[0] + batch_d
    return mean + shift, ghost_var, shift, mean, batch_var


def ghost_noise_draw(x: Tensor4, cfg: GhostNoiseConfig, rng: np.random.Generator) -> NoiseDraw:
    """Shift ``m - mu`` and scale ``sqrt((s2 + eps) / (var + eps))`` for every (sample, channel)."""
    if cfg.sampling == "analytical":
        return analytical_noise_draw(x.shape[:2], cfg.ghost_size, rng, cfg.granularity).restrict(cfg.mode)
    batch = x.shape[0]
    indices = rng.integers(0, batch, size=(batch, cfg.ghost_size))
    _, s2, shift, _, var = ghost_moments(x, indices)
    scale = np.sqrt((s2 + cfg.eps) / (var + cfg.eps))
    return NoiseDraw(shift, scale, indices).restrict(cfg.mode)


def apply_draw(x: Tensor4, draw: NoiseDraw) -> Tensor4:
    return (x - draw.shift[:, :, None, None]) / draw.scale[:, :, None, None]


def gni(x: Tensor4, cfg: GhostNoiseConfig, rng: np.random.Generator, training: bool = True) -> Tensor4:
    """Ghost noise injection; the identity outside training."""
    if not training:
        return x
    return apply_draw(x, ghost_noise_draw(x, cfg, rng))


# ---------------------------------------------------------------------------
# analytical ghost noise


def analytical_noise_draw(shape, ghost_size: float, rng: np.random.Generator,
                          granularity: str = "per_sample_channel") -> NoiseDraw:
    """Shift ~ Normal(0, 1/N) and squared scale ~ chi2(N)/N, for (B, C) ``shape``."""
    batch, channels = shape
    if granularity == "per_channel":
        draw_shape = (1, channels)
    elif granularity == "per_sample_channel":
        draw_shape = (batch, channels)
    else:
        raise ValueError(f"granularity must be one of {AGNI_GRANULARITIES}")
    mu = rng.standard_normal(draw_shape) / np.sqrt(ghost_size)
    v = sample_chi2(ghost_size, draw_shape, rng) / ghost_size
    return NoiseDraw(np.broadcast_to(mu, shape).copy(), np.broadcast_to(np.sqrt(v), shape).copy())


def agni(xhat: Tensor4, ghost_size: float, rng: np.random.Generator,
         granularity: str = "per_sample_channel", training: bool = True) -> Tensor4:
    """Analytical ghost noise on (approximately) standardized activations."""
    if not training:
        return xhat
    return apply_draw(xhat, analytical_noise_draw(xhat.shape[:2], ghost_size, rng, granularity))


# ---------------------------------------------------------------------------
# dropout variants and additive noise


def _check_p(p: float):
    if not 0.0 <= p < 1.0:
        raise ValueError(f"drop probability must satisfy 0 <= p < 1, got {p}")


def _mask_shape(shape, granularity: str):
    if granularity == "elementwise":
        return tuple(shape)
    if granularity == "channelwise":
        return tuple(shape[:2]) + (1,) * (len(shape) - 2)
    raise ValueError(f"granularity must be one of {DROPOUT_GRANULARITIES}")


def gaussian_dropout_gain(shape, p: float, rng: np.random.Generator, granularity: str = "elementwise") -> np.ndarray:
    """Multiplicative noise t ~ Normal(1, p / (1 - p))."""
    _check_p(p)
    mshape = _mask_shape(shape, granularity)
    if p == 0.0:
        return np.ones(mshape)
    return 1.0 + np.sqrt(p / (1.0 - p)) * rng.standard_normal(mshape)


def bernoulli_dropout_gain(shape, p: float, rng: np.random.Generator, granularity: str = "elementwise") -> np.ndarray:
    """Inverted dropout mask: 0 with probability p, 1/(1 - p) otherwise."""
    _check_p(p)
    mshape = _mask_shape(shape, granularity)
    if p == 0.0:
        return np.ones(mshape)
    return (rng.random(mshape) >= p) / (1.0 - p)


def gaussian_dropout(x: np.ndarray, p: float, rng: np.random.Generator,
                     granularity: str = "elementwise", training: bool = True) -> np.ndarray:
    _check_p(p)
    if not training or p == 0.0:
        return x
    return x * gaussian_dropout_gain(x.shape, p, rng, granularity)


def bernoulli_dropout(x: np.ndarray, p: float, rng: np.random.Generator,
                      granularity: str = "elementwise", training: bool = True) -> np.ndarray:
    _check_p(p)
    if not training or p == 0.0:
        return x
    return x * bernoulli_dropout_gain(x.shape, p, rng, granularity)


def eagn(x: np.ndarray, sigma: float, rng: np.random.Generator, training: bool = True) -> np.ndarray:
    """Elementwise additive Gaussian noise of standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if not training or sigma == 0.0:
        return x
    return x + sigma * rng.standard_normal(x.shape)
