"""Analytical ghost-noise laws, variance decomposition and distribution tests.

The two-level Gaussian activation model: per-sample channel means
mu_bc ~ Normal(0, sigma_B^2) and spatial values x_bci ~ Normal(mu_bc, sigma_I^2).
For a ghost batch of N samples with I spatial positions each,

    shift   ~ Normal(0, sigma_I^2 / (N I) + sigma_B^2 / N)
    moment  ~ sigma_I^2/(N I) chi2(N I) + sigma_B^2/N chi2(N)

where ``moment`` is the ghost batch's mean square about the population mean.
Fully connected layers are the special case sigma_I^2 = 0, I = 1.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special, stats

from .noise import ghost_moments_from_counts
from .tensor import Tensor4, spatial_stats


@dataclass(frozen=True)
class ConvNoiseModel:
    ghost_size: int
    spatial_size: int
    sigma_b2: float
    sigma_i2: float

    def __post_init__(self):
        if self.ghost_size < 1 or self.spatial_size < 1:
            raise ValueError("ghost_size and spatial_size must be >= 1")
        if np.any(np.asarray(self.sigma_b2) < 0) or np.any(np.asarray(self.sigma_i2) < 0):
            raise ValueError("variances must be non-negative")

    @classmethod
    def fully_connected(cls, ghost_size: int) -> "ConvNoiseModel":
        return cls(ghost_size, 1, 1.0, 0.0)


def shift_noise_variance(model: ConvNoiseModel):
    n, i = model.ghost_size, model.spatial_size
    return model.sigma_i2 / (n * i) + model.sigma_b2 / n


def scale_noise_moments(model: ConvNoiseModel):
    """Mean and variance of the ghost second moment, treating both chi-squared parts as independent."""
    n, i = model.ghost_size, model.spatial_size
    mean = model.sigma_i2 + model.sigma_b2
    var = 2.0 * model.sigma_i2**2 / (n * i) + 2.0 * model.sigma_b2**2 / n
    return mean, var


def sample_conv_model(model: ConvNoiseModel, batch: int, rng: np.random.Generator,
                      channels: int = 1, spatial_shape=None) -> Tensor4:
    """Draw a (B, C, H, W) tensor from the two-level Gaussian model.

    ``spatial_shape`` factors the spatial size as (H, W); default (I, 1).
    Per-channel variances may be given as length-C arrays.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    h, w = spatial_shape or (model.spatial_size, 1)
    if h * w != model.spatial_size:
        raise ValueError(f"spatial shape {h}x{w} does not factor I={model.spatial_size}")
    sb = np.sqrt(np.broadcast_to(np.asarray(model.sigma_b2, dtype=float), (channels,)))
    si = np.sqrt(np.broadcast_to(np.asarray(model.sigma_i2, dtype=float), (channels,)))
    mu = rng.standard_normal((batch, channels, 1, 1)) * sb[None, :, None, None]
    return mu + rng.standard_normal((batch, channels, h, w)) * si[None, :, None, None]


class VarianceDecomposition(NamedTuple):
    inter: np.ndarray  # variance of per-sample means, sigma_B^2
    intra: np.ndarray  # mean spatial variance, sigma_I^2


def variance_decomposition(x: Tensor4) -> VarianceDecomposition:
    """Split every channel's biased variance into inter- and intra-sample parts."""
    if x.shape[0] < 2:
        raise ValueError("variance decomposition needs at least two samples")
    s = spatial_stats(x)
    inter = ((s.mean - s.mean.mean(axis=0)) ** 2).mean(axis=0)
    return VarianceDecomposition(inter, s.var.mean(axis=0))


def estimate_conv_model(x: Tensor4, ghost_size: int) -> ConvNoiseModel:
    """Unbiased estimate of the two-level model parameters behind ``x``.

    The biased decomposition underestimates sigma_I^2 by (I-1)/I, and the
    spread of per-sample means also carries sigma_I^2 / I; both are undone here.
    """
    batch, spatial = x.shape[0], x.shape[2] * x.shape[3]
    dec = variance_decomposition(x)
    intra = dec.intra * spatial / (spatial - 1) if spatial > 1 else np.zeros_like(dec.intra)
    inter = np.maximum(dec.inter * batch / (batch - 1) - intra / spatial, 0.0)
    return ConvNoiseModel(ghost_size, spatial, inter, intra)


# ---------------------------------------------------------------------------
# measured ghost noise


class GhostNoiseSample(NamedTuple):
    """Ghost noise measured from one batch, every field of shape (B, C).

    ``shift`` is (m - mu) / sqrt(var).  ``var_ratio`` is s2 / var with s2 the ghost variance
    about the ghost mean (the statistic used to scale activations).
    ``moment_ratio`` is the ghost mean square about the batch mean over var,
    i.e. (s2 + shift^2) / var.
    """

    shift: np.ndarray
    var_ratio: np.ndarray
    moment_ratio: np.ndarray


def measure_ghost_noise(x: Tensor4, ghost_size: int, rng: np.random.Generator) -> GhostNoiseSample:
    # multinomial counts have the law of with-replacement index draws and stay
    # cheap for very large ghost sizes
    batch = x.shape[0]
    w = rng.multinomial(ghost_size, np.full(batch, 1.0 / batch), size=batch).astype(np.float64)
    _, s2, shift, _, var = ghost_moments_from_counts(x, w)
    return GhostNoiseSample(shift / np.sqrt(var), s2 / var, (s2 + shift**2) / var)


def expected_ghost_variance(model: ConvNoiseModel, batch: int) -> float:
    """Mean of the ghost variance s2 under the two-level model for a finite batch.

    With-replacement ghost batches from a batch of B samples lose one degree
    of freedom to the ghost mean: E[s2] = E[batch var] - E[Var(shift)].
    """
    n, i = model.ghost_size, model.spatial_size
    total = model.sigma_i2 * (1.0 - 1.0 / (batch * i)) + model.sigma_b2 * (batch - 1) / batch
    between = (model.sigma_b2 + model.sigma_i2 / i) * (batch - 1) / batch
    return total - between / n


# ---------------------------------------------------------------------------
# distribution comparison


def ks_statistic(samples: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance between ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("ks_statistic needs at least one sample")
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - f)), np.max(np.abs((i - 1) / n - f))))


def normal_cdf(var: float, mean: float = 0.0):
    sd = np.sqrt(var)
    return lambda x: special.ndtr((np.asarray(x) - mean) / sd)


def scaled_chi2_cdf(dof: float):
    """CDF of chi2(dof) / dof."""
    return lambda x: stats.chi2.cdf(np.asarray(x) * dof, dof)


def chi2_mixture_cdf(a: float, k1: float, b: float, k2: float, grid_size: int = 4096):
    """CDF of a*chi2(k1) + b*chi2(k2) for independent parts, by numerical convolution.

    The returned callable interpolates a CDF tabulated on ``grid_size`` points.
    """
    if a == 0 or b == 0:
        c, k = (b, k2) if a == 0 else (a, k1)
        return lambda x: stats.chi2.cdf(np.asarray(x) / c, k)
    mean, sd = a * k1 + b * k2, np.sqrt(2 * a * a * k1 + 2 * b * b * k2)
    t = np.linspace(0.0, mean + 12 * sd, grid_size)
    # integrate over the b-part with a midpoint rule on its quantile scale
    u = (np.arange(grid_size) + 0.5) / grid_size
    y = b * stats.chi2.ppf(u, k2)
    table = np.empty_like(t)
    for j in range(0, grid_size, 256):
        tt = t[j:j + 256, None]
        table[j:j + 256] = stats.chi2.cdf(np.maximum(tt - y, 0.0) / a, k1).mean(axis=1)
    return lambda x: np.interp(np.asarray(x), t, table, left=0.0, right=1.0)


def fit_effective_ghost_size(samples: Sequence[float], kind: str,
                             grid: Sequence[float] = tuple(2.0 ** np.arange(0, 11))):
    """Grid search for the fully connected ghost size whose law is KS-closest to ``samples``.

    ``kind`` is ``"shift"`` (compare with Normal(0, 1/N)) or ``"moment"``
    (compare with chi2(N)/N).  Returns ``(best_n, best_d)``.
    """
    if kind == "shift":
        law = lambda n: normal_cdf(1.0 / n)  # noqa: E731
    elif kind == "moment":
        law = scaled_chi2_cdf
    else:
        raise ValueError("kind must be 'shift' or 'moment'")
    scores = [(ks_statistic(samples, law(n)), n) for n in grid]
    d, n = min(scores)
    return n, d


def histogram_counts(samples: Sequence[float], bins: int = 50, value_range=None):
    counts, edges = np.histogram(np.asarray(samples), bins=bins, range=value_range)
    return counts, edges
