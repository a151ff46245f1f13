"""Registered algebraic invariants checked by ``ghostnoise verify``."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import noise
from .analytics import variance_decomposition
from .normalization import (
    batch_norm_train,
    exclusive_batch_norm,
    gbn_decomposition_residuals,
    ghost_batch_norm,
    ghost_stats,
)
from .tensor import channel_stats, rng_stream

FAULTS = ("none", "eps_misplacement")


@dataclass
class InvariantResult:
    name: str
    trials: int
    worst: float
    threshold: float
    passed: bool


def random_ghost_batch(rng, batch=32, channels=4, hw=2, ghost_size=8, floor=0.1):
    """Random tensor whose every ghost-batch channel variance is at least ``floor``."""
    while True:
        scale = rng.uniform(0.5, 3.0, size=(1, channels, 1, 1))
        shift = rng.uniform(-5.0, 5.0, size=(1, channels, 1, 1))
        x = shift + scale * rng.standard_normal((batch, channels, hw, hw))
        if ghost_stats(x, ghost_size).var.min() >= floor:
            return x


def _faulty_gbn(x, ghost_size, eps):
    # eps moved outside the square root, at the magnitude used for noise injection
    g = x.reshape(x.shape[0] // ghost_size, ghost_size, *x.shape[1:])
    mean = g.mean(axis=(1, 3, 4), keepdims=True)
    std = g.std(axis=(1, 3, 4), keepdims=True)
    return ((g - mean) / (std + 1e-3)).reshape(x.shape)


def check_equivalence(trials, rng, fault="none"):
    worst = 0.0
    for _ in range(trials):
        x = random_ghost_batch(rng)
        if fault == "eps_misplacement":
            xhat, _ = batch_norm_train(x, 1e-10)
            res = np.abs(_faulty_gbn(x, 8, 1e-10) - _faulty_gbn(xhat, 8, 1e-10)).max()
        else:
            res = gbn_decomposition_residuals(x, 8, 1e-10).equivalence
        worst = max(worst, float(res))
    return worst, 1e-6


def check_deviation_stats(trials, rng, fault="none"):
    worst = 0.0
    for _ in range(trials):
        r = gbn_decomposition_residuals(random_ghost_batch(rng), 8, 1e-10)
        worst = max(worst, r.mean, r.std)
    return worst, 1e-6


def check_gbn_bound(trials, rng, fault="none"):
    """Largest excess of max |GBN(X)| over sqrt(N), across N in {2, 4, 8, 16}.

    One value per sample and channel; with H*W spatial positions the bound
    becomes sqrt(N*H*W).
    """
    worst = -np.inf
    for n in (2, 4, 8, 16):
        for _ in range(trials):
            x = random_ghost_batch(rng, ghost_size=n, hw=1, floor=0.0)
            worst = max(worst, float(np.abs(ghost_batch_norm(x, n, 1e-10)).max() - np.sqrt(n)))
    return worst, 1e-6


def check_xbn_witness(trials, rng, fault="none"):
    """Shortfall of the XBN witness output below 90 (negative means the bound is exceeded)."""
    x = np.array([2.0, 5.0, 5.0]).reshape(3, 1, 1, 1)
    out = abs(float(exclusive_batch_norm(x, 3, 1e-3)[0, 0, 0, 0]))
    return 90.0 - out, 0.0


def check_stop_gradient(trials, rng, fault="none"):
    """Relative gap between the finite-difference GNI Jacobian (draw pinned) and 1/scale."""
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((6, 2, 2, 2))
        cfg = noise.GhostNoiseConfig(3)
        draw = noise.ghost_noise_draw(x, cfg, rng)
        h = 1e-6
        b, c, i, j = (int(rng.integers(s)) for s in x.shape)
        xp, xm = x.copy(), x.copy()
        xp[b, c, i, j] += h
        xm[b, c, i, j] -= h
        fd = (noise.apply_draw(xp, draw) - noise.apply_draw(xm, draw)) / (2 * h)
        expected = np.zeros_like(x)
        expected[b, c, i, j] = 1.0 / draw.scale[b, c]
        worst = max(worst, float(np.abs(fd - expected).max() / abs(expected[b, c, i, j])))
    return worst, 1e-6


def check_decomposition(trials, rng, fault="none"):
    worst = 0.0
    for _ in range(trials):
        shape = tuple(int(v) for v in rng.integers(2, 6, size=4))
        x = rng.standard_normal(shape) * rng.uniform(0.1, 10.0) + rng.uniform(-10, 10)
        dec = variance_decomposition(x)
        worst = max(worst, float(np.abs(dec.inter + dec.intra - channel_stats(x).var).max()))
    return worst, 1e-10


def check_degenerate_identity(trials, rng, fault="none"):
    worst = 0.0
    for _ in range(trials):
        sample = rng.standard_normal((1, 3, 2, 2))
        x = np.repeat(sample, 5, axis=0)
        for mode in noise.MODES:
            cfg = noise.GhostNoiseConfig(int(rng.integers(1, 9)), mode=mode)
            worst = max(worst, float(np.abs(noise.gni(x, cfg, rng) - x).max()))
    return worst, 0.0


INVARIANTS: dict[str, Callable] = {
    "gbn_double_normalization": check_equivalence,
    "gbn_deviation_statistics": check_deviation_stats,
    "gbn_output_bound": check_gbn_bound,
    "xbn_unbounded_witness": check_xbn_witness,
    "gni_stop_gradient_jacobian": check_stop_gradient,
    "variance_decomposition_identity": check_decomposition,
    "gni_degenerate_batch_identity": check_degenerate_identity,
}


def run_invariants(trials: int = 1000, seed: int = 0, fault: str = "none") -> list[InvariantResult]:
    if fault not in FAULTS:
        raise ValueError(f"fault must be one of {FAULTS}")
    results = []
    for k, (name, check) in enumerate(INVARIANTS.items()):
        worst, threshold = check(trials, rng_stream(seed, 100 + k), fault)
        results.append(InvariantResult(name, trials, worst, threshold, bool(worst <= threshold)))
    return results
