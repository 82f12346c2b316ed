"""Parameterized layers over :mod:`functional`. Each owns named parameters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base: ``params`` maps local names to Parameters, ``buffers`` to plain arrays."""

    def __init__(self):
        self.params: dict[str, Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def _param(self, name: str, data: np.ndarray) -> Parameter:
        p = Parameter(data, name=name)
        self.params[name] = p
        return p


class Conv3d(Layer):
    def __init__(self, in_features: int, filters: int, kernel, rng, dtype=np.float32):
        super().__init__()
        kernel = tuple(kernel)
        vol = int(np.prod(kernel))
        self.kernel = kernel
        self.weight = self._param("weight", glorot_uniform(rng, kernel + (in_features, filters), vol * in_features, vol * filters, dtype))
        self.bias = self._param("bias", np.zeros(filters, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv3d_same(x, self.weight, self.bias)


class MultiScaleConv3d(Layer):
    """Parallel same-padded convolutions, one per kernel size, concatenated on features
    in the order given (smallest kernel first by default)."""

    def __init__(self, in_features: int, filters: int, rng, scales=(3, 5, 7), conv_dim: int = 3, dtype=np.float32):
        super().__init__()
        self.branches = []
        for k in scales:
            kernel = (k, k, k) if conv_dim == 3 else (k, k, 1)
            conv = Conv3d(in_features, filters, kernel, rng, dtype)
            self.branches.append(conv)
            for name, p in conv.params.items():
                self.params[f"k{k}.{name}"] = p
        self.out_features = filters * len(scales)

    def __call__(self, x: Tensor) -> Tensor:
        return F.multiscale_conv3d(x, [c.weight for c in self.branches], [c.bias for c in self.branches])


class BatchNorm(Layer):
    def __init__(self, features: int, momentum: float = 0.9, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = self._param("gamma", np.ones(features, dtype=dtype))
        self.beta = self._param("beta", np.zeros(features, dtype=dtype))
        self.buffers["running_mean"] = np.zeros(features, dtype=dtype)
        self.buffers["running_var"] = np.ones(features, dtype=dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return F.batchnorm(
            x, self.gamma, self.beta,
            self.buffers["running_mean"], self.buffers["running_var"],
            training, self.momentum, self.eps,
        )


class Dense(Layer):
    def __init__(self, in_features: int, units: int, rng, dtype=np.float32):
        super().__init__()
        self.weight = self._param("weight", glorot_uniform(rng, (in_features, units), in_features, units, dtype))
        self.bias = self._param("bias", np.zeros(units, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.dense(x, self.weight, self.bias)


class LSTM(Layer):
    def __init__(self, in_features: int, units: int, rng, dtype=np.float32):
        super().__init__()
        h = units
        self.units = units
        self.w_x = self._param("w_x", glorot_uniform(rng, (in_features, 4 * h), in_features, 4 * h, dtype))
        lim = 1.0 / np.sqrt(h)
        self.w_h = self._param("w_h", rng.uniform(-lim, lim, size=(h, 4 * h)).astype(dtype))
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0  # forget gate
        self.b = self._param("b", b)

    def __call__(self, x: Tensor) -> Tensor:
        return F.lstm(x, self.w_x, self.w_h, self.b)


class AttentionPool(Layer):
    def __init__(self, hidden: int, rng, attn_dim: int | None = None, dtype=np.float32):
        super().__init__()
        a = attn_dim or hidden
        self.w = self._param("w", glorot_uniform(rng, (hidden, a), hidden, a, dtype))
        self.b = self._param("b", np.zeros(a, dtype=dtype))
        self.v = self._param("v", glorot_uniform(rng, (a,), a, 1, dtype))

    def __call__(self, h: Tensor) -> Tensor:
        return F.attention_pool(h, self.w, self.b, self.v)


@dataclass
class Dropout:
    p: float

    def __call__(self, x: Tensor, rng: np.random.Generator, training: bool) -> Tensor:
        return F.dropout(x, self.p, rng, training)
