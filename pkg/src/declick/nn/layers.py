"""Layers for the value networks: conv, batchnorm, ReLU, dense, softmax head.

All layers operate on batches; conv inputs are (N, C, L), dense inputs
(N, units).  Each layer caches what backward needs; backward without a
preceding train-mode forward raises StaleCacheError.
"""
from __future__ import annotations

import numpy as np

from . import backend

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LOGIT_CLAMP = 50.0


class StaleCacheError(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    """Non-finite activation, signals divergence of training."""


class Layer:
    """Base: params/grads are dicts name -> array, same structure."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StaleCacheError(f"{type(self).__name__}: no cached forward")
        cache, self._cache = self._cache, None
        return cache


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int,
                    dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv3(Layer):
    """Kernel-3 same-length conv.  A conv feeding a batchnorm runs without
    bias: batchnorm subtracts the per-channel mean, so such a bias has an
    exactly-zero gradient and is pure dead weight."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 dtype=np.float64, use_bias: bool = True):
        super().__init__()
        self.use_bias = use_bias
        self.params["w"] = _fan_in_uniform(rng, (c_out, c_in, 3), c_in * 3, dtype)
        if use_bias:
            self.params["b"] = np.zeros(c_out, dtype=dtype)
        self._zero_b = np.zeros(c_out, dtype=dtype)

    def forward(self, x, train):
        b = self.params["b"] if self.use_bias else self._zero_b
        y = backend.conv3_forward(x, self.params["w"], b)
        if train:
            self._cache = x
        return y

    def backward(self, gy):
        x = self._take_cache()
        gx, gw, gb = backend.conv3_backward(x, self.params["w"], gy)
        self.grads["w"] = gw
        if self.use_bias:
            self.grads["b"] = gb
        return gx


class BatchNorm(Layer):
    """Per-channel batchnorm over (batch, length)."""

    def __init__(self, channels: int, dtype=np.float64):
        super().__init__()
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, train):
        if train:
            mean = x.mean(axis=(0, 2))
            var = np.einsum("ncl,ncl->c", x, x) / (x.shape[0] * x.shape[2])
            var -= mean * mean
            self.running_mean = (BN_MOMENTUM * self.running_mean
                                 + (1.0 - BN_MOMENTUM) * mean)
            self.running_var = (BN_MOMENTUM * self.running_var
                                + (1.0 - BN_MOMENTUM) * var)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = x * inv_std[None, :, None]
        xhat -= (mean * inv_std)[None, :, None]
        y = xhat * self.params["gamma"][None, :, None]
        y += self.params["beta"][None, :, None]
        if train:
            self._cache = (xhat, inv_std)
        return y

    def backward(self, gy):
        xhat, inv_std = self._take_cache()
        m = gy.shape[0] * gy.shape[2]
        ggamma = np.einsum("ncl,ncl->c", gy, xhat)
        gbeta = np.einsum("ncl->c", gy)
        self.grads["gamma"] = ggamma
        self.grads["beta"] = gbeta
        gx = gy - (gbeta / m)[None, :, None]
        gx -= xhat * (ggamma / m)[None, :, None]
        gx *= (self.params["gamma"] * inv_std)[None, :, None]
        return gx


class ReLU(Layer):
    def forward(self, x, train):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, gy):
        return gy * self._take_cache()


class Flatten(Layer):
    def forward(self, x, train):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._take_cache())


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        self.params["w"] = _fan_in_uniform(rng, (n_in, n_out), n_in, dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, train):
        if train:
            self._cache = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, gy):
        x = self._take_cache()
        self.grads["w"] = x.T @ gy
        self.grads["b"] = gy.sum(axis=0)
        return gy @ self.params["w"].T


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Two-class softmax after clamping logits to |z| <= 50; returns (N, 2)."""
    z = np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent_backward(probs: np.ndarray,
                          targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and the mean-loss gradient w.r.t. the logits."""
    n = probs.shape[0]
    p_target = probs[np.arange(n), targets]
    losses = -np.log(np.maximum(p_target, 1e-300))
    glogits = probs.copy()
    glogits[np.arange(n), targets] -= 1.0
    return losses, glogits / n
