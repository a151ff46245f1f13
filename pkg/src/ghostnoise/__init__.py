"""Ghost batch normalization, exclusive batch normalization and ghost noise injection."""

from .analytics import (
    ConvNoiseModel,
    ks_statistic,
    sample_conv_model,
    scale_noise_moments,
    shift_noise_variance,
    variance_decomposition,
)
from .noise import (
    GhostNoiseConfig,
    NoiseDraw,
    agni,
    bernoulli_dropout,
    draw_ghost_stats,
    eagn,
    gaussian_dropout,
    gni,
)
from .normalization import (
    RunningStats,
    batch_norm_infer,
    batch_norm_train,
    exclusive_batch_norm,
    gbn_decomposition_residuals,
    ghost_batch_norm,
    layer_norm,
    update_running,
)
from .tensor import as_tensor4, channel_stats, gather_samples, rng_stream, spatial_stats

__version__ = "0.1.0"
