import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostnoise.normalization import (
    DivisibilityError,
    NormConfig,
    RunningStats,
    batch_norm_infer,
    batch_norm_train,
    exclusive_batch_norm,
    exclusive_stats,
    gbn_decomposition_residuals,
    ghost_batch_norm,
    ghost_stats,
    layer_norm,
    update_running,
)
from ghostnoise.tensor import ChannelStats
from ghostnoise.verify import random_ghost_batch


def naive_exclusive(x, n, eps):
    """Leave-one-out normalization by explicit loops."""
    out = np.empty_like(x)
    for b in range(x.shape[0]):
        g0 = (b // n) * n
        others = [k for k in range(g0, g0 + n) if k != b]
        for c in range(x.shape[1]):
            vals = x[others, c].ravel()
            out[b, c] = (x[b, c] - vals.mean()) / np.sqrt(vals.var() + eps)
    return out


def test_batch_norm_zero_mean_unit_var():
    rng = np.random.default_rng(0)
    x = 3.0 + 2.0 * rng.standard_normal((16, 3, 2, 2))
    out, stats = batch_norm_train(x, 1e-12)
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-9)
    assert stats.mean.shape == (3,)


def test_constant_channel_maps_to_zero():
    x = np.full((4, 2, 1, 1), 3.0)
    out, _ = batch_norm_train(x, 1e-5)
    np.testing.assert_array_equal(out, 0.0)


def test_batch_norm_infer_requires_update():
    with pytest.raises(RuntimeError):
        batch_norm_infer(np.zeros((2, 3, 1, 1)), RunningStats.empty(3), 1e-5)


def test_running_stats_first_update_copies_then_ema():
    s1 = ChannelStats(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    s2 = ChannelStats(np.array([3.0, 0.0]), np.array([1.0, 1.0]))
    r = update_running(RunningStats.empty(2), s1, 0.9)
    np.testing.assert_array_equal(r.mean, s1.mean)
    assert r.update_count == 1
    r = update_running(r, s2, 0.9)
    np.testing.assert_allclose(r.mean, [1.2, 1.8])
    np.testing.assert_allclose(r.var, [2.8, 3.7])
    with pytest.raises(ValueError):
        update_running(r, ChannelStats(np.zeros(3), np.ones(3)))


def test_infer_matches_train_when_running_equals_batch():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 2, 3, 1))
    out, stats = batch_norm_train(x, 1e-5)
    r = update_running(RunningStats.empty(2), stats)
    np.testing.assert_allclose(batch_norm_infer(x, r, 1e-5), out, atol=1e-12)


def test_norm_config_validation():
    with pytest.raises(ValueError):
        NormConfig(eps=0)
    with pytest.raises(ValueError):
        NormConfig(ghost_size=0)
    with pytest.raises(ValueError):
        NormConfig(ema_decay=1.0)


def test_ghost_batch_norm_blocks():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((12, 2, 2, 2))
    out = ghost_batch_norm(x, 4, 1e-5)
    for g in range(3):
        block, _ = batch_norm_train(x[4 * g:4 * g + 4], 1e-5)
        np.testing.assert_allclose(out[4 * g:4 * g + 4], block, atol=1e-12)
    assert ghost_stats(x, 4).mean.shape == (3, 2)


def test_ghost_batch_norm_full_batch_equals_bn():
    x = np.random.default_rng(3).standard_normal((8, 3, 1, 1))
    np.testing.assert_allclose(ghost_batch_norm(x, 8, 1e-5), batch_norm_train(x, 1e-5)[0])


def test_ghost_batch_norm_divisibility():
    with pytest.raises(DivisibilityError):
        ghost_batch_norm(np.zeros((10, 1, 1, 1)), 4, 1e-5)


def test_exclusive_matches_naive():
    x = np.random.default_rng(4).standard_normal((6, 2, 2, 1)) * 3 + 1
    np.testing.assert_allclose(exclusive_batch_norm(x, 3, 1e-3), naive_exclusive(x, 3, 1e-3), atol=1e-10)
    mean, var = exclusive_stats(x, 3)
    assert mean.shape == var.shape == (6, 2)


def test_exclusive_needs_two():
    with pytest.raises(ValueError):
        exclusive_stats(np.zeros((4, 1, 1, 1)), 1)


def test_exclusive_witness_value():
    x = np.array([2.0, 5.0, 5.0]).reshape(3, 1, 1, 1)
    out = exclusive_batch_norm(x, 3, 1e-3)
    # the other two samples agree, so the divisor is sqrt(eps)
    assert np.isclose(out[0, 0, 0, 0], -3.0 / np.sqrt(1e-3))
    assert abs(out[0, 0, 0, 0]) >= 90.0


def test_exclusive_grows_with_separation():
    mags = []
    for sep in (1.0, 10.0, 100.0):
        x = np.array([0.0, sep, sep]).reshape(3, 1, 1, 1)
        mags.append(abs(exclusive_batch_norm(x, 3, 1e-3)[0, 0, 0, 0]))
    assert mags[0] < mags[1] < mags[2]
    assert mags[2] > 1000


def test_layer_norm_per_sample():
    x = np.random.default_rng(5).standard_normal((3, 4, 2, 2)) * 5
    out = layer_norm(x, 1e-12)
    np.testing.assert_allclose(out.mean(axis=(1, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(1, 2, 3)), 1.0, atol=1e-9)


def test_decomposition_residuals_small():
    rng = np.random.default_rng(6)
    r = gbn_decomposition_residuals(random_ghost_batch(rng), 8, 1e-10)
    assert r.equivalence < 1e-6 and r.mean < 1e-6 and r.std < 1e-6


def test_decomposition_residuals_preconditions():
    rng = np.random.default_rng(7)
    x = random_ghost_batch(rng)
    with pytest.raises(ValueError):
        gbn_decomposition_residuals(x, 8, 1e-5)
    x[:8] = 1.0
    with pytest.raises(ValueError):
        gbn_decomposition_residuals(x, 8, 1e-10)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 4, 8, 16]), st.integers(0, 2**32 - 1))
def test_gbn_bounded_by_sqrt_n(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2 * n, 3, 1, 1)) * rng.uniform(0.01, 100) + rng.uniform(-50, 50)
    assert np.abs(ghost_batch_norm(x, n, 1e-10)).max() <= np.sqrt(n) + 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50), st.floats(-20, 20))
def test_gbn_invariant_to_affine(seed, a, b):
    x = random_ghost_batch(np.random.default_rng(seed))
    np.testing.assert_allclose(ghost_batch_norm(a * x + b, 8, 1e-10), ghost_batch_norm(x, 8, 1e-10), atol=1e-6)
