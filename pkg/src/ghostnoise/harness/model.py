"""Fully connected classifier with hand-written reverse-mode gradients.

Hidden layer ``l``::

    a = h @ W + b -> normalize -> inject noise -> gain * . + bias -> ReLU

Normalization uses batch statistics in training mode (with their full
dependence on every sample in the batch during backward) and running
statistics in eval mode.  Noise injectors are affine maps with constant
coefficients; their draws are cached so a forward pass can be replayed
exactly, and backward treats them as constants.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .. import noise
from ..normalization import (
    RunningStats,
    batch_norm_infer,
    batch_norm_train,
    exclusive_stats,
    ghost_batch_norm,
    ghost_stats,
    layer_norm,
    update_running,
)
from ..tensor import ChannelStats, channel_stats

NORMS = ("batch_norm", "ghost_batch_norm", "exclusive_batch_norm", "layer_norm", "none")
BATCH_NORMS = ("batch_norm", "ghost_batch_norm", "exclusive_batch_norm")
INJECTORS = ("none", "gni", "agni", "gaussian_dropout", "bernoulli_dropout", "eagn")


@dataclass(frozen=True)
class InjectorSpec:
    kind: str = "none"
    ghost_size: int = 16
    mode: str = "full"
    eps: float = 1e-3
    agni_granularity: str = "per_sample_channel"
    p: float = 0.1
    granularity: str = "elementwise"
    sigma: float = 0.1
    placement: str = "pre_affine"

    def __post_init__(self):
        if self.kind not in INJECTORS:
            raise ValueError(f"injector kind must be one of {INJECTORS}, got {self.kind!r}")
        if self.placement not in ("pre_affine", "post_affine"):
            raise ValueError("placement must be 'pre_affine' or 'post_affine'")
        if self.placement == "post_affine" and self.kind != "eagn":
            raise ValueError("only eagn supports post_affine placement")
        if self.kind in ("gni", "agni"):
            noise.GhostNoiseConfig(self.ghost_size, self.eps, self.mode,
                                   "analytical" if self.kind == "agni" else "empirical",
                                   self.agni_granularity)
        if self.kind in ("gaussian_dropout", "bernoulli_dropout"):
            noise._check_p(self.p)
            if self.granularity not in noise.DROPOUT_GRANULARITIES:
                raise ValueError(f"granularity must be one of {noise.DROPOUT_GRANULARITIES}")
        if self.kind == "eagn" and self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def noise_config(self) -> noise.GhostNoiseConfig:
        sampling = "analytical" if self.kind == "agni" else "empirical"
        return noise.GhostNoiseConfig(self.ghost_size, self.eps, self.mode, sampling, self.agni_granularity)


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    num_classes: int
    hidden: tuple = (512, 300)
    norm: Union[str, tuple] = "batch_norm"
    norm_ghost_size: int = 16
    norm_eps: float = 1e-5
    injector: Union[InjectorSpec, tuple] = field(default_factory=InjectorSpec)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.num_classes < 2 or any(h < 1 for h in self.hidden):
            raise ValueError("dimensions must be positive and num_classes >= 2")
        for kind in self.layer_norms:
            if kind not in NORMS:
                raise ValueError(f"norm must be one of {NORMS}, got {kind!r}")
        if "exclusive_batch_norm" in self.layer_norms and self.norm_ghost_size < 2:
            raise ValueError("exclusive_batch_norm needs norm_ghost_size >= 2")
        self.layer_injectors  # validates the per-layer count

    def _per_layer(self, value, name):
        if isinstance(value, (list, tuple)):
            if len(value) != len(self.hidden):
                raise ValueError(f"{name}: expected {len(self.hidden)} entries, got {len(value)}")
            return tuple(value)
        return (value,) * len(self.hidden)

    @property
    def layer_norms(self) -> tuple:
        return self._per_layer(self.norm, "norm")

    @property
    def layer_injectors(self) -> tuple:
        return self._per_layer(self.injector, "injector")

    @property
    def uses_batch_stats(self) -> bool:
        return any(n in BATCH_NORMS for n in self.layer_norms) or any(
            i.kind == "gni" for i in self.layer_injectors)


def _lift(a: np.ndarray) -> np.ndarray:
    # no finiteness check here: a diverging run must reach the loss to be flagged
    return a[:, :, None, None]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to ``logits``."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


@dataclass
class LayerCache:
    h_in: np.ndarray
    a: np.ndarray
    n: np.ndarray
    n_noisy: np.ndarray
    z: np.ndarray
    norm: str
    norm_aux: dict
    injection: Optional[noise.Injection]
    batch_stats: Optional[ChannelStats]
    draw: Optional[noise.NoiseDraw] = None


@dataclass
class ForwardCache:
    layers: list
    h_out: np.ndarray
    logits: np.ndarray
    mode: str

    @property
    def injections(self) -> list:
        return [lc.injection for lc in self.layers]

    @property
    def draws(self) -> list:
        return [lc.draw for lc in self.layers]


class Mlp:
    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.params = {}
        dims = (spec.input_dim,) + spec.hidden
        for l, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
            self.params[f"W{l}"] = rng.standard_normal((din, dout)) * np.sqrt(2.0 / din)
            self.params[f"b{l}"] = np.zeros(dout)
            self.params[f"gain{l}"] = np.ones(dout)
            self.params[f"bias{l}"] = np.zeros(dout)
        self.params["W_out"] = rng.standard_normal((dims[-1], spec.num_classes)) * np.sqrt(1.0 / dims[-1])
        self.params["b_out"] = np.zeros(spec.num_classes)
        self.running = [RunningStats.empty(h) for h in spec.hidden]

    @staticmethod
    def is_decayed(name: str) -> bool:
        """Weight decay applies to weight matrices only, never to gains or biases."""
        return name.startswith("W")

    # -- normalization -------------------------------------------------------

    def _normalize(self, l: int, a: np.ndarray, train: bool):
        kind = self.spec.layer_norms[l]
        eps = self.spec.norm_eps
        if kind == "none":
            return a, {}, None
        if kind == "layer_norm":
            n = layer_norm(_lift(a), eps)[:, :, 0, 0]
            var = a.var(axis=1, keepdims=True)
            return n, {"r": 1.0 / np.sqrt(var + eps)}, None
        if not train:
            return batch_norm_infer(_lift(a), self.running[l], eps)[:, :, 0, 0], {}, None

        x4 = _lift(a)
        if kind == "batch_norm":
            n, stats = batch_norm_train(x4, eps)
            return n[:, :, 0, 0], {"r": 1.0 / np.sqrt(stats.var + eps)}, stats
        stats = channel_stats(x4)
        gsize = self.spec.norm_ghost_size
        if kind == "ghost_batch_norm":
            n = ghost_batch_norm(x4, gsize, eps)[:, :, 0, 0]
            r = 1.0 / np.sqrt(ghost_stats(x4, gsize).var + eps)
            return n, {"r": r}, stats
        mean, var = exclusive_stats(x4, gsize)
        r = 1.0 / np.sqrt(var + eps)
        return (a - mean) * r, {"r": r, "loo_mean": mean}, stats

    def _normalize_backward(self, l: int, dn: np.ndarray, lc: LayerCache) -> np.ndarray:
        kind = lc.norm
        if kind == "none":
            return dn
        if kind in BATCH_NORMS and lc.batch_stats is None:
            # eval-mode normalization is a fixed per-channel affine map
            return dn / np.sqrt(self.running[l].var + self.spec.norm_eps)
        y, r = lc.n, lc.norm_aux["r"]
        if kind == "batch_norm":
            return _standardize_backward(dn, y, r, axis=0)
        if kind == "layer_norm":
            return _standardize_backward(dn, y, r, axis=1)
        b, c = dn.shape
        g = self.spec.norm_ghost_size
        shape = (b // g, g, c)
        if kind == "ghost_batch_norm":
            out = _standardize_backward(dn.reshape(shape), y.reshape(shape), r[:, None, :], axis=1)
            return out.reshape(b, c)
        return _exclusive_backward(dn.reshape(shape), y.reshape(shape), r.reshape(shape),
                                   lc.a.reshape(shape), lc.norm_aux["loo_mean"].reshape(shape)).reshape(b, c)

    # -- noise ---------------------------------------------------------------

    def _injection(self, l: int, n: np.ndarray, rng: np.random.Generator):
        inj = self.spec.layer_injectors[l]
        shape = n.shape
        if inj.kind == "none":
            return None, None
        if inj.kind in ("gni", "agni"):
            draw = noise.ghost_noise_draw(_lift(n), inj.noise_config, rng)
            return noise.Injection.from_draw(draw, ndim=2), draw
        if inj.kind == "gaussian_dropout":
            return noise.Injection(np.zeros(1), noise.gaussian_dropout_gain(shape, inj.p, rng, inj.granularity)), None
        if inj.kind == "bernoulli_dropout":
            return noise.Injection(np.zeros(1), noise.bernoulli_dropout_gain(shape, inj.p, rng, inj.granularity)), None
        return noise.Injection(-inj.sigma * rng.standard_normal(shape), np.ones(1)), None

    # -- passes --------------------------------------------------------------

    def forward(self, x: np.ndarray, mode: str = "train", rng: Optional[np.random.Generator] = None,
                pinned: Optional[list] = None):
        """Return ``(logits, cache)``.

        ``pinned`` replays the per-layer injections of an earlier cache
        instead of drawing new noise.  Eval mode never injects noise.
        """
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 4:
            x = x.reshape(x.shape[0], -1)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ValueError(f"expected input of shape (B, {self.spec.input_dim}), got {x.shape}")
        train = mode == "train"
        if not train:
            for l, kind in enumerate(self.spec.layer_norms):
                if kind in BATCH_NORMS and self.running[l].update_count < 1:
                    raise RuntimeError(f"layer {l}: running statistics are not initialized")

        p = self.params
        h = x
        layers = []
        for l in range(len(self.spec.hidden)):
            a = h @ p[f"W{l}"] + p[f"b{l}"]
            n, aux, stats = self._normalize(l, a, train)
            injection, draw = None, None
            if train:
                if pinned is not None:
                    injection = pinned[l]
                else:
                    if self.spec.layer_injectors[l].kind != "none" and rng is None:
                        raise ValueError("training-mode noise injection needs an rng")
                    injection, draw = self._injection(l, n, rng)
            post = self.spec.layer_injectors[l].placement == "post_affine"
            n_noisy = injection.apply(n) if injection is not None and not post else n
            z = p[f"gain{l}"] * n_noisy + p[f"bias{l}"]
            if injection is not None and post:
                z = injection.apply(z)
            layers.append(LayerCache(h, a, n, n_noisy, z, self.spec.layer_norms[l], aux, injection, stats, draw))
            h = np.maximum(z, 0.0)
        logits = h @ p["W_out"] + p["b_out"]
        return logits, ForwardCache(layers, h, logits, mode)

    def backward(self, cache: ForwardCache, labels: np.ndarray):
        """Return ``(loss, grads)`` for the mean softmax cross-entropy of ``cache``."""
        p = self.params
        loss, dlogits = softmax_cross_entropy(cache.logits, labels)
        grads = {"W_out": cache.h_out.T @ dlogits, "b_out": dlogits.sum(axis=0)}
        dh = dlogits @ p["W_out"].T
        for l in reversed(range(len(cache.layers))):
            lc = cache.layers[l]
            dz = dh * (lc.z > 0)
            post = self.spec.layer_injectors[l].placement == "post_affine"
            if lc.injection is not None and post:
                dz = lc.injection.backward(dz)
            grads[f"gain{l}"] = (dz * lc.n_noisy).sum(axis=0)
            grads[f"bias{l}"] = dz.sum(axis=0)
            dn = dz * p[f"gain{l}"]
            if lc.injection is not None and not post:
                dn = lc.injection.backward(dn)
            da = self._normalize_backward(l, dn, lc)
            grads[f"W{l}"] = lc.h_in.T @ da
            grads[f"b{l}"] = da.sum(axis=0)
            dh = da @ p[f"W{l}"].T
        return loss, grads

    def update_running(self, cache: ForwardCache, decay: float = 0.9):
        """Fold the full-batch statistics of a training forward pass into the running averages."""
        for l, lc in enumerate(cache.layers):
            if lc.batch_stats is not None:
                self.running[l] = update_running(self.running[l], lc.batch_stats, decay)

    def predict(self, x: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size], mode="eval")[0] for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(out, axis=0)


def _standardize_backward(dy, y, r, axis):
    """Input gradient of y = (x - mean) * r with mean and r computed along ``axis``."""
    n = dy.shape[axis]
    return r / n * (n * dy - dy.sum(axis=axis, keepdims=True) - y * (dy * y).sum(axis=axis, keepdims=True))


def _exclusive_backward(dy, y, r, x, loo_mean):
    """Input gradient of leave-one-out normalization within ghost batches, arrays (G, N, C)."""
    m = dy.shape[1] - 1
    gr = dy * r
    gyr2 = dy * y * r * r
    tot_gr = gr.sum(axis=1, keepdims=True)
    tot_gyr2 = gyr2.sum(axis=1, keepdims=True)
    tot_gyr2_mu = (gyr2 * loo_mean).sum(axis=1, keepdims=True)
    others = (tot_gr - gr) + x * (tot_gyr2 - gyr2) - (tot_gyr2_mu - gyr2 * loo_mean)
    return gr - others / m
