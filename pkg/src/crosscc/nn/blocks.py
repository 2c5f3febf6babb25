"""Parameter initialization and composite blocks shared by the encoders.

Initialization is Kaiming-style fan-in scaling from a caller-supplied
Generator; draws happen in float64 and are cast to the store dtype so the
draw sequence does not depend on precision.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, channel_norm, conv2d_3x3, leaky_relu, linear, maxpool2x2
from .params import ParameterStore

LEAKY_SLOPE = 0.01


def init_conv3x3(store: ParameterStore, name: str, c_in: int, c_out: int,
                 rng: np.random.Generator, dtype=np.float64):
    std = np.sqrt(2.0 / (c_in * 9))
    w = (rng.standard_normal((c_out, c_in, 3, 3)) * std).astype(dtype)
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(c_out, dtype=dtype))


def init_linear(store: ParameterStore, name: str, f_in: int, f_out: int,
                rng: np.random.Generator, dtype=np.float64):
    std = np.sqrt(2.0 / f_in)
    w = (rng.standard_normal((f_out, f_in)) * std).astype(dtype)
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(f_out, dtype=dtype))


def init_norm(store: ParameterStore, name: str, c: int, dtype=np.float64):
    store.add(f"{name}.gamma", np.ones(c, dtype=dtype))
    store.add(f"{name}.beta", np.zeros(c, dtype=dtype))


def init_double_conv(store: ParameterStore, name: str, c_in: int, c_out: int,
                     rng: np.random.Generator, dtype=np.float64):
    init_conv3x3(store, f"{name}.conv1", c_in, c_out, rng, dtype)
    init_conv3x3(store, f"{name}.conv2", c_out, c_out, rng, dtype)


def conv_apply(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    return conv2d_3x3(x, store[f"{name}.w"], store[f"{name}.b"])


def linear_apply(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    return linear(x, store[f"{name}.w"], store[f"{name}.b"])


def norm_apply(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    return channel_norm(x, store[f"{name}.gamma"], store[f"{name}.beta"])


def double_conv(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    """conv3x3 -> leaky_relu -> conv3x3 -> leaky_relu."""
    x = leaky_relu(conv_apply(x, store, f"{name}.conv1"), LEAKY_SLOPE)
    return leaky_relu(conv_apply(x, store, f"{name}.conv2"), LEAKY_SLOPE)


def down_block(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    """double_conv -> maxpool -> channel_norm (the encoder stage)."""
    x = double_conv(x, store, name)
    return norm_apply(maxpool2x2(x), store, f"{name}.norm")
