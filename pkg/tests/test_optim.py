import math

import numpy as np
import pytest

from ghostnoise.harness.optim import cosine_lr, sgd_step


def test_plain_gradient_step():
    p, v = sgd_step({"W": np.array([1.0, 2.0])}, {"W": np.array([0.5, -1.0])}, {}, 0.1, 0.0, 0.0)
    np.testing.assert_allclose(p["W"], [0.95, 2.1])


def test_zero_gradient_fixed_point():
    w = np.array([3.0])
    p, v = sgd_step({"W": w}, {"W": np.zeros(1)}, {"W": np.zeros(1)}, 0.1, 0.9, 0.0)
    np.testing.assert_array_equal(p["W"], w)


def test_two_momentum_steps():
    g = {"W": np.array([1.0])}
    p, v = {"W": np.array([0.0])}, {}
    for _ in range(2):
        p, v = sgd_step(p, g, v, 0.1, 0.9, 0.0)
    np.testing.assert_allclose(p["W"], -0.1 * (1 + 1.9))


def test_weight_decay_is_coupled_and_selective():
    params = {"W": np.array([2.0]), "gain": np.array([2.0])}
    grads = {"W": np.zeros(1), "gain": np.zeros(1)}
    p, v = sgd_step(params, grads, {}, 0.1, 0.9, 0.5, decayed=lambda n: n == "W")
    np.testing.assert_allclose(v["W"], [1.0])
    np.testing.assert_allclose(p["W"], [1.9])
    np.testing.assert_array_equal(p["gain"], [2.0])


def test_inputs_untouched():
    w = np.array([1.0])
    sgd_step({"W": w}, {"W": np.ones(1)}, {}, 0.1, 0.9, 0.1)
    assert w[0] == 1.0


def test_cosine_schedule_points():
    assert cosine_lr(0, 100, 10, 1.0) == 0.0
    assert cosine_lr(5, 100, 10, 1.0) == pytest.approx(0.5)
    assert cosine_lr(10, 100, 10, 1.0) == pytest.approx(1.0)
    assert cosine_lr(55, 100, 10, 1.0) == pytest.approx(0.5)
    last = cosine_lr(99, 100, 10, 1.0)
    assert last < 0.5 * (1 - math.cos(math.pi / 90)) + 1e-12


def test_cosine_no_warmup_monotone():
    lrs = [cosine_lr(s, 50, 0, 0.3) for s in range(50)]
    assert lrs[0] == pytest.approx(0.3)
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
