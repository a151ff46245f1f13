import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostnoise import noise
from ghostnoise.noise import (
    GhostNoiseConfig,
    Injection,
    NoiseDraw,
    agni,
    analytical_noise_draw,
    apply_draw,
    bernoulli_dropout,
    draw_ghost_stats,
    eagn,
    gaussian_dropout,
    ghost_moments,
    ghost_noise_draw,
    gni,
)
from ghostnoise.tensor import channel_stats, gather_samples


def naive_ghost_stats(x, indices):
    m = np.empty(x.shape[:2])
    s2 = np.empty(x.shape[:2])
    for b, idx in enumerate(indices):
        st_ = channel_stats(gather_samples(x, idx))
        m[b], s2[b] = st_.mean, st_.var
    return m, s2


def test_ghost_stats_match_explicit_gather():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((10, 3, 2, 2)) * 4 + 2
    m, s2, idx = draw_ghost_stats(x, 5, rng)
    assert idx.shape == (10, 5)
    m0, s20 = naive_ghost_stats(x, idx)
    np.testing.assert_allclose(m, m0, atol=1e-10)
    np.testing.assert_allclose(s2, s20, atol=1e-10)


def test_ghost_moments_batch_stats():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((7, 2, 3, 1))
    _, _, shift, mu, var = ghost_moments(x, rng.integers(0, 7, size=(7, 4)))
    stats = channel_stats(x)
    np.testing.assert_allclose(mu, stats.mean)
    np.testing.assert_allclose(var, stats.var)
    assert shift.shape == (7, 2)


def test_noise_draw_formula():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 2, 1, 1))
    cfg = GhostNoiseConfig(4, eps=1e-3)
    draw = ghost_noise_draw(x, cfg, np.random.default_rng(9))
    m, s2 = naive_ghost_stats(x, draw.ghost_indices)
    stats = channel_stats(x)
    np.testing.assert_allclose(draw.shift, m - stats.mean, atol=1e-12)
    np.testing.assert_allclose(draw.scale, np.sqrt((s2 + 1e-3) / (stats.var + 1e-3)), atol=1e-12)


def test_degenerate_batch_is_identity():
    x = np.repeat(np.random.default_rng(3).standard_normal((1, 3, 2, 2)), 6, axis=0)
    for mode in noise.MODES:
        out = gni(x, GhostNoiseConfig(4, mode=mode), np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)


def test_modes_restrict_components():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((8, 2, 1, 1))
    full = ghost_noise_draw(x, GhostNoiseConfig(4), np.random.default_rng(1))
    shift = ghost_noise_draw(x, GhostNoiseConfig(4, mode="shift_only"), np.random.default_rng(1))
    scale = ghost_noise_draw(x, GhostNoiseConfig(4, mode="scale_only"), np.random.default_rng(1))
    np.testing.assert_array_equal(shift.shift, full.shift)
    np.testing.assert_array_equal(shift.scale, 1.0)
    np.testing.assert_array_equal(scale.scale, full.scale)
    np.testing.assert_array_equal(scale.shift, 0.0)


def test_eval_is_identity():
    x = np.random.default_rng(5).standard_normal((4, 2, 1, 1))
    rng = np.random.default_rng(0)
    assert gni(x, GhostNoiseConfig(2), rng, training=False) is x
    assert agni(x, 2, rng, training=False) is x
    assert gaussian_dropout(x, 0.5, rng, training=False) is x
    assert eagn(x, 1.0, rng, training=False) is x


def test_config_validation():
    with pytest.raises(ValueError):
        GhostNoiseConfig(0)
    with pytest.raises(ValueError):
        GhostNoiseConfig(4, eps=0)
    with pytest.raises(ValueError):
        GhostNoiseConfig(4, mode="both")
    with pytest.raises(ValueError):
        GhostNoiseConfig(4, sampling="exact")


def test_ghost_size_need_not_divide_batch():
    x = np.random.default_rng(6).standard_normal((10, 2, 1, 1))
    out = gni(x, GhostNoiseConfig(7), np.random.default_rng(0))
    assert out.shape == x.shape and np.all(np.isfinite(out))


def test_injection_roundtrip():
    draw = NoiseDraw(np.array([[0.5, -1.0]]), np.array([[2.0, 0.5]]))
    inj = Injection.from_draw(draw)
    x = np.ones((1, 2, 1, 1))
    np.testing.assert_allclose(inj.apply(x), apply_draw(x, draw))
    np.testing.assert_allclose(inj.backward(np.ones_like(x))[0, :, 0, 0], [0.5, 2.0])


def test_agni_granularity():
    d = analytical_noise_draw((5, 3), 8, np.random.default_rng(0), "per_channel")
    np.testing.assert_array_equal(d.shift, np.broadcast_to(d.shift[0], (5, 3)))
    d = analytical_noise_draw((5, 3), 8, np.random.default_rng(0))
    assert len(np.unique(d.shift)) == 15
    with pytest.raises(ValueError):
        analytical_noise_draw((5, 3), 8, np.random.default_rng(0), "per_sample")


def test_agni_draw_formula():
    x = np.random.default_rng(7).standard_normal((4, 2, 1, 1))
    draw = analytical_noise_draw((4, 2), 16, np.random.default_rng(3))
    np.testing.assert_allclose(agni(x, 16, np.random.default_rng(3)), apply_draw(x, draw))


def test_gaussian_dropout_moments():
    rng = np.random.default_rng(8)
    t = gaussian_dropout(np.ones((200_000, 1, 1, 1)), 0.2, rng).ravel()
    assert abs(t.mean() - 1) < 4 * np.sqrt(0.25 / t.size)
    assert abs(t.var() / 0.25 - 1) < 0.02


def test_bernoulli_dropout_inverted():
    rng = np.random.default_rng(9)
    out = bernoulli_dropout(np.ones((100_000, 1, 1, 1)), 0.3, rng).ravel()
    assert set(np.round(np.unique(out), 12)) == {0.0, round(1 / 0.7, 12)}
    assert abs(out.mean() - 1) < 0.01


def test_channelwise_masks_share_spatial():
    rng = np.random.default_rng(10)
    out = bernoulli_dropout(np.ones((6, 4, 3, 3)), 0.5, rng, granularity="channelwise")
    assert np.all(out == out[:, :, :1, :1])
    out = gaussian_dropout(np.ones((6, 4, 3, 3)), 0.5, rng, granularity="channelwise")
    assert np.all(out == out[:, :, :1, :1])


def test_dropout_rejects_bad_p():
    for bad in (-0.1, 1.0):
        with pytest.raises(ValueError):
            gaussian_dropout(np.ones((1, 1, 1, 1)), bad, np.random.default_rng(0))
    with pytest.raises(ValueError):
        noise.bernoulli_dropout_gain((1, 1, 1, 1), 0.5, np.random.default_rng(0), "rowwise")


def test_eagn_std():
    out = eagn(np.zeros((100_000, 1, 1, 1)), 0.3, np.random.default_rng(11))
    assert abs(out.std() - 0.3) < 0.005
    with pytest.raises(ValueError):
        eagn(np.zeros((1, 1, 1, 1)), -1.0, np.random.default_rng(0))


def test_same_seed_same_noise():
    x = np.random.default_rng(12).standard_normal((8, 3, 2, 2))
    a = gni(x, GhostNoiseConfig(4), np.random.default_rng(5))
    b = gni(x, GhostNoiseConfig(4), np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_scale_positive_and_finite(batch, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, 2, 1, 2)) * rng.uniform(1e-3, 1e3)
    draw = ghost_noise_draw(x, GhostNoiseConfig(n), rng)
    assert np.all(draw.scale > 0) and np.all(np.isfinite(draw.shift))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_shift_bounded_by_batch_range(seed):
    # a ghost mean is a mean of batch samples, so it lies within their range
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, 2, 1, 1))
    draw = ghost_noise_draw(x, GhostNoiseConfig(3), rng)
    mu = x.mean(axis=0)[:, 0, 0]
    m = draw.shift + mu
    assert np.all(m >= x.min(axis=0)[:, 0, 0] - 1e-12)
    assert np.all(m <= x.max(axis=0)[:, 0, 0] + 1e-12)
