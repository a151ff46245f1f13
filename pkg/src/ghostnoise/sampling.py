"""Gamma and chi-squared variates by Marsaglia-Tsang squeeze/rejection.

Cost per variate is O(1) in the shape parameter, so chi-squared draws with
huge or non-integer degrees of freedom are as cheap as small ones.
"""

import numpy as np


def _gamma_shape_ge_one(shape: float, n: int, rng: np.random.Generator) -> np.ndarray:
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        z = rng.standard_normal(todo.size)
        u = rng.random(todo.size)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        # squeeze first, full log test only where the squeeze fails
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = ok & (
                (u < 1.0 - 0.0331 * z**4)
                | (np.log(u) < 0.5 * z * z + d * (1.0 - v + np.log(np.where(ok, v, 1.0))))
            )
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    return out


def sample_gamma(shape: float, size, rng: np.random.Generator) -> np.ndarray:
    """Gamma(shape, scale=1) variates of the given ``size``."""
    if not shape > 0:
        raise ValueError("gamma shape must be positive")
    n = int(np.prod(size))
    if shape >= 1.0:
        flat = _gamma_shape_ge_one(shape, n, rng)
    else:
        # boost: Gamma(a) = Gamma(a + 1) * U**(1/a)
        flat = _gamma_shape_ge_one(shape + 1.0, n, rng) * rng.random(n) ** (1.0 / shape)
    return flat.reshape(size)


def sample_chi2(dof: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chi-squared variates with ``dof`` degrees of freedom, as 2 * Gamma(dof / 2)."""
    return 2.0 * sample_gamma(0.5 * dof, size, rng)
