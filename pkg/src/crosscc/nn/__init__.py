"""Minimal differentiable tensor ops, optimizer, and parameter persistence."""

from .autograd import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    channel_norm,
    circular_conv_fft,
    concat_channels,
    conv2d_3x3,
    div,
    leaky_relu,
    linear,
    maxpool2x2,
    mul,
    nearest_upsample2x,
    neg,
    reshape,
    select_channel,
    softmax2d,
    sub,
    tacos,
    tclip,
    texp,
    tile_spatial,
    tmean,
    tsqrt,
    tsum,
)
from .params import (
    ParameterStore,
    adam_step,
    deserialize_params,
    serialize_params,
)

__all__ = [
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "channel_norm",
    "circular_conv_fft",
    "concat_channels",
    "conv2d_3x3",
    "div",
    "leaky_relu",
    "linear",
    "maxpool2x2",
    "mul",
    "nearest_upsample2x",
    "neg",
    "reshape",
    "select_channel",
    "softmax2d",
    "sub",
    "tacos",
    "tclip",
    "texp",
    "tile_spatial",
    "tmean",
    "tsqrt",
    "tsum",
    "ParameterStore",
    "adam_step",
    "deserialize_params",
    "serialize_params",
]
