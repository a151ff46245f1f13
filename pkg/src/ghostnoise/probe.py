"""Monte-Carlo probe comparing measured ghost noise with its analytical laws."""

from dataclasses import dataclass

import numpy as np

from .analytics import (
    ConvNoiseModel,
    chi2_mixture_cdf,
    expected_ghost_variance,
    histogram_counts,
    ks_statistic,
    measure_ghost_noise,
    normal_cdf,
    sample_conv_model,
    scale_noise_moments,
    shift_noise_variance,
)
from .tensor import rng_stream

PROBE_COLUMNS = ["quantity", "analytical", "empirical", "rel_error", "tolerance", "ks_d", "passed"]
HISTOGRAM_COLUMNS = ["distribution", "bin_lo", "bin_hi", "count"]


@dataclass
class ProbeResult:
    rows: list
    histograms: list

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows)


def probe_model(cfg) -> ConvNoiseModel:
    if cfg.model == "1d":
        if cfg.spatial_size != 1 or cfg.sigma_i2 != 0:
            raise ValueError("dist model '1d' needs spatial_size 1 and sigma_i2 0")
        return ConvNoiseModel(cfg.ghost_size, 1, cfg.sigma_b2, 0.0)
    if cfg.model == "conv":
        return ConvNoiseModel(cfg.ghost_size, cfg.spatial_size, cfg.sigma_b2, cfg.sigma_i2)
    raise ValueError(f"dist.model must be '1d' or 'conv', got {cfg.model!r}")


def collect_noise(model: ConvNoiseModel, batch: int, channels: int, draws: int, rng):
    """Measure ``draws`` ghost-noise values, regenerating the batch for every ghost draw.

    Returns the normalized shift, moment ratio and variance ratio of
    :class:`GhostNoiseSample`, flattened.
    """
    per_batch = batch * channels
    shifts, moments, ghost_vars = [], [], []
    for _ in range(-(-draws // per_batch)):
        x = sample_conv_model(model, batch, rng, channels=channels)
        g = measure_ghost_noise(x, model.ghost_size, rng)
        shifts.append(g.shift.ravel())
        moments.append(g.moment_ratio.ravel())
        ghost_vars.append(g.var_ratio.ravel())
    return tuple(np.concatenate(a)[:draws] for a in (shifts, moments, ghost_vars))


def _row(quantity, analytical, empirical, tol, ks_d=float("nan"), ks_max=None, abs_tol=None):
    if abs_tol is not None:
        rel = abs(empirical - analytical) / abs_tol if abs_tol > 0 else float("inf")
        ok = abs(empirical - analytical) <= abs_tol
    else:
        rel = abs(empirical - analytical) / abs(analytical)
        ok = rel <= tol
    if ks_max is not None:
        ok = ok and ks_d < ks_max
    return {"quantity": quantity, "analytical": float(analytical), "empirical": float(empirical),
            "rel_error": float(rel), "tolerance": float(tol), "ks_d": float(ks_d), "passed": bool(ok)}


def run_probe(cfg, seed: int = 0) -> ProbeResult:
    """Measure ghost noise under ``cfg`` (a DistConfig) and compare with the analytical laws.

    Shift noise is measured in units of the batch standard deviation; the
    scale noise is the ghost mean square about the batch mean over the batch
    variance.  Both laws assume a total channel variance of 1.
    """
    model = probe_model(cfg)
    total = model.sigma_b2 + model.sigma_i2
    if not np.isclose(total, 1.0, atol=1e-6):
        raise ValueError("dist model variances must sum to 1 (post-normalization channels)")
    rng = rng_stream(seed, 10)
    shift, moment, ghost_var = collect_noise(model, cfg.batch_size, cfg.channels, cfg.draws, rng)
    n = shift.size

    a = shift_noise_variance(model)
    m_mean, m_var = scale_noise_moments(model)
    k_n, k_ni = model.ghost_size, model.ghost_size * model.spatial_size
    moment_cdf = chi2_mixture_cdf(model.sigma_i2 / k_ni, k_ni, model.sigma_b2 / k_n, k_n)

    se = np.sqrt(shift.var() / n)
    rows = [
        _row("shift_mean", 0.0, shift.mean(), 3.0, abs_tol=3 * se),
        _row("shift_var", a, shift.var(), cfg.shift_var_tol, ks_statistic(shift, normal_cdf(a)), cfg.ks_max),
        _row("s2_mean", m_mean, moment.mean(), cfg.moment_mean_tol, ks_statistic(moment, moment_cdf), cfg.ks_max),
        _row("s2_var", m_var, moment.var(), cfg.moment_var_tol),
        # ghost variance about its own ghost mean, against the finite-batch law
        _row("centred_s2_mean", expected_ghost_variance(model, cfg.batch_size), ghost_var.mean(),
             cfg.moment_mean_tol),
    ]
    hists = []
    for name, values in (("shift", shift), ("s2", moment)):
        counts, edges = histogram_counts(values, cfg.bins)
        hists.extend({"distribution": name, "bin_lo": float(lo), "bin_hi": float(hi), "count": int(c)}
                     for c, lo, hi in zip(counts, edges[:-1], edges[1:]))
    return ProbeResult(rows, hists)
