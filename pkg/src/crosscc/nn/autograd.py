"""Minimal reverse-mode autodiff over numpy arrays.

Differentiable ops run eagerly on Tensor.data and, when executed inside a
`with Tape():` block, append a backward closure to the active tape.  Calling
`backward(tape, loss)` replays the closures in reverse execution order (which
is a valid topological order) and accumulates gradients into `Tensor.grad`.
A tape can be consumed exactly once.

Outside a tape every op is a plain forward computation, so inference needs no
graph bookkeeping.  Results keep the dtype of their inputs; use float64 for
gradient checks and float32 for training throughput.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, StateError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """An array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of differentiable ops for one forward pass."""

    def __init__(self):
        self._ops = []
        self._produced = set()
        self.consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def _record(self, out: Tensor, fn):
        self._produced.add(id(out))
        self._ops.append(fn)


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _make(out_data, inputs, bwd) -> Tensor:
    """Wrap a result, recording `bwd` if any input is being traced."""
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True

        def fn():
            if out.grad is not None:
                bwd(out.grad)

        tape._record(out, fn)
    return out


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(x) into every traced tensor's .grad."""
    if tape.consumed:
        raise StateError("tape already consumed by a previous backward pass")
    if id(loss) not in tape._produced:
        raise StateError("loss was not produced under this tape")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for fn in reversed(tape._ops):
        fn()
    tape.consumed = True


# ---------------------------------------------------------------------------
# elementwise and reduction ops

# Binary ops accept Tensor, ndarray, or Python scalar operands.  Non-Tensor
# operands are constants; Python scalars stay weakly typed so float32 graphs
# are not upcast.


def _raw(x):
    return x.data if isinstance(x, Tensor) else x


def _accum_operand(x, g):
    if isinstance(x, Tensor) and x.requires_grad:
        _accum(x, _unbroadcast(g, x.data.shape))


def _tensor_inputs(*ops):
    return tuple(x for x in ops if isinstance(x, Tensor))


def add(a, b) -> Tensor:
    ad, bd = _raw(a), _raw(b)
    return _make(ad + bd, _tensor_inputs(a, b), lambda g: (
        _accum_operand(a, g), _accum_operand(b, g)))


def sub(a, b) -> Tensor:
    ad, bd = _raw(a), _raw(b)
    return _make(ad - bd, _tensor_inputs(a, b), lambda g: (
        _accum_operand(a, g), _accum_operand(b, -g)))


def mul(a, b) -> Tensor:
    ad, bd = _raw(a), _raw(b)
    return _make(ad * bd, _tensor_inputs(a, b), lambda g: (
        _accum_operand(a, g * bd), _accum_operand(b, g * ad)))


def div(a, b) -> Tensor:
    ad, bd = _raw(a), _raw(b)
    return _make(ad / bd, _tensor_inputs(a, b), lambda g: (
        _accum_operand(a, g / bd), _accum_operand(b, -g * ad / (bd * bd))))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accum(a, -g))


def texp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _make(out_data, (a,), lambda g: _accum(a, g * out_data))


def tsqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)
    return _make(out_data, (a,), lambda g: _accum(a, g / (2.0 * out_data)))


def tacos(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(np.arccos(ad), (a,),
                 lambda g: _accum(a, -g / np.sqrt(1.0 - ad * ad)))


def tclip(a, lo: float, hi: float) -> Tensor:
    """Clamp; gradient is 1 strictly inside (lo, hi) and 0 where clamped."""
    a = as_tensor(a)
    ad = a.data
    inside = (ad > lo) & (ad < hi)
    return _make(np.clip(ad, lo, hi), (a,),
                 lambda g: _accum(a, np.where(inside, g, 0.0)))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(out_data, (a,), bwd)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in np.atleast_1d(axis)])
    s = tsum(a, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / float(n))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.data.shape
    return _make(a.data.reshape(shape), (a,),
                 lambda g: _accum(a, g.reshape(orig)))


# ---------------------------------------------------------------------------
# neural-network ops


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _make(np.where(xd >= 0, xd, slope * xd), (x,),
                 lambda g: _accum(x, np.where(xd >= 0, g, slope * g)))


def _batched(xd: np.ndarray, rank: int):
    """View an unbatched array as batch-1; report whether to squeeze back."""
    if xd.ndim == rank:
        return xd[None], True
    if xd.ndim == rank + 1:
        return xd, False
    raise ShapeError(f"expected rank {rank} or {rank + 1}, got shape {xd.shape}")


def conv2d_3x3(x, w, b) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1, plus per-channel bias.

    x is (C_in, H, W) or (N, C_in, H, W); w is (C_out, C_in, 3, 3);
    b is (C_out,).  Output spatial size equals the input's.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    xd, squeeze = _batched(x.data, 3)
    n, c, h, wd_ = xd.shape
    if w.data.ndim != 4 or w.data.shape[1:] != (c, 3, 3):
        raise ShapeError(
            f"kernel shape {w.data.shape} incompatible with input channels {c}")
    c_out = w.data.shape[0]
    if b.data.shape != (c_out,):
        raise ShapeError(f"bias shape {b.data.shape} != ({c_out},)")

    xp = np.pad(xd, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, w, 3, 3)
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * h * wd_, c * 9)
    wmat = w.data.reshape(c_out, c * 9)
    out2 = col @ wmat.T
    out2 += b.data
    out_data = out2.reshape(n, h, wd_, c_out).transpose(0, 3, 1, 2)
    if squeeze:
        out_data = out_data[0]

    def bwd(g):
        gd = g[None] if squeeze else g
        g2 = np.ascontiguousarray(gd.transpose(0, 2, 3, 1)).reshape(
            n * h * wd_, c_out)
        if w.requires_grad:
            _accum(w, (g2.T @ col).reshape(c_out, c, 3, 3))
        if b.requires_grad:
            _accum(b, g2.sum(axis=0))
        if x.requires_grad:
            dcol = (g2 @ wmat).reshape(n, h, wd_, c, 3, 3)
            dxp = np.zeros_like(xp)
            for di in range(3):
                for dj in range(3):
                    dxp[:, :, di:di + h, dj:dj + wd_] += dcol[
                        :, :, :, :, di, dj].transpose(0, 3, 1, 2)
            dx = dxp[:, :, 1:-1, 1:-1]
            _accum(x, dx[0] if squeeze else dx)

    return _make(out_data, (x, w, b), bwd)


def maxpool2x2(x) -> Tensor:
    """2x2 max pooling, stride 2; gradient routes to the first argmax."""
    x = as_tensor(x)
    xd, squeeze = _batched(x.data, 3)
    n, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    xr = xd.reshape(n, c, h // 2, 2, w // 2, 2).transpose(
        0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)
    out_data = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        out_data = out_data[0]

    def bwd(g):
        gd = g[None] if squeeze else g
        dxr = np.zeros((n, c, h // 2, w // 2, 4), dtype=gd.dtype)
        np.put_along_axis(dxr, idx[..., None], gd[..., None], axis=-1)
        dx = dxr.reshape(n, c, h // 2, w // 2, 2, 2).transpose(
            0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        _accum(x, dx[0] if squeeze else dx)

    return _make(out_data, (x,), bwd)


def channel_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize each channel over its spatial positions, then affine.

    Statistics are per sample and per channel, identical in training and
    inference, so single-image forward passes are well defined.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd, squeeze = _batched(x.data, 3)
    n, c, h, w = xd.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"affine shape must be ({c},)")
    mean = xd.mean(axis=(2, 3), keepdims=True)
    var = xd.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean) * inv
    out_data = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    if squeeze:
        out_data = out_data[0]

    def bwd(g):
        gd = g[None] if squeeze else g
        if gamma.requires_grad:
            _accum(gamma, (gd * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            _accum(beta, gd.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = gd * gamma.data.reshape(1, c, 1, 1)
            m1 = dxhat.mean(axis=(2, 3), keepdims=True)
            m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
            dx = inv * (dxhat - m1 - xhat * m2)
            _accum(x, dx[0] if squeeze else dx)

    return _make(out_data, (x, gamma, beta), bwd)


def linear(x, w, b) -> Tensor:
    """Affine map: x @ w.T + b, with x of shape (F,) or (N, F)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    xd, squeeze = (x.data[None], True) if x.data.ndim == 1 else (x.data, False)
    if xd.ndim != 2 or w.data.ndim != 2 or xd.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"linear shapes incompatible: x {x.data.shape}, w {w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"bias shape {b.data.shape} != ({w.data.shape[0]},)")
    out_data = xd @ w.data.T + b.data
    if squeeze:
        out_data = out_data[0]

    def bwd(g):
        gd = g[None] if squeeze else g
        if x.requires_grad:
            dx = gd @ w.data
            _accum(x, dx[0] if squeeze else dx)
        if w.requires_grad:
            _accum(w, gd.T @ xd)
        if b.requires_grad:
            _accum(b, gd.sum(axis=0))

    return _make(out_data, (x, w, b), bwd)


def nearest_upsample2x(x) -> Tensor:
    x = as_tensor(x)
    xd, squeeze = _batched(x.data, 3)
    n, c, h, w = xd.shape
    out_data = xd.repeat(2, axis=2).repeat(2, axis=3)
    if squeeze:
        out_data = out_data[0]

    def bwd(g):
        gd = g[None] if squeeze else g
        dx = gd.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
        _accum(x, dx[0] if squeeze else dx)

    return _make(out_data, (x,), bwd)


def concat_channels(*xs) -> Tensor:
    """Concatenate along the channel axis (axis -3)."""
    ts = [as_tensor(x) for x in xs]
    datas = [t.data for t in ts]
    ndim = datas[0].ndim
    if any(d.ndim != ndim for d in datas):
        raise ShapeError("concat_channels inputs must share rank")
    if any(d.shape[-2:] != datas[0].shape[-2:] for d in datas):
        raise ShapeError("concat_channels inputs must share spatial dims")
    out_data = np.concatenate(datas, axis=-3)
    sizes = [d.shape[-3] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                _accum(t, g[..., lo:hi, :, :])

    return _make(out_data, ts, bwd)


def select_channel(x, index: int) -> Tensor:
    """Pick one channel from (..., C, H, W), dropping the channel axis."""
    x = as_tensor(x)
    if x.data.ndim < 3:
        raise ShapeError("select_channel expects at least (C, H, W)")
    out_data = x.data[..., index, :, :].copy()

    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[..., index, :, :] = g
        _accum(x, dx)

    return _make(out_data, (x,), bwd)


def tile_spatial(x, h: int, w: int) -> Tensor:
    """Broadcast (..., K) to (..., K, h, w) with constant spatial maps."""
    x = as_tensor(x)
    out_data = np.broadcast_to(
        x.data[..., None, None], x.data.shape + (h, w)).copy()
    return _make(out_data, (x,),
                 lambda g: _accum(x, g.sum(axis=(-2, -1))))


def softmax2d(x) -> Tensor:
    """Softmax jointly over the trailing two (spatial) axes."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeError("softmax2d expects at least a 2-D map")
    xd = x.data
    m = xd.max(axis=(-2, -1), keepdims=True)
    e = np.exp(xd - m)
    p = e / e.sum(axis=(-2, -1), keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=(-2, -1), keepdims=True)
        _accum(x, p * (g - dot))

    return _make(p, (x,), bwd)


def circular_conv_fft(n, f) -> Tensor:
    """Circular (wrap-around) 2-D convolution via FFT.

    Both inputs must share their trailing (H, W) shape; leading batch axes
    must match exactly.  Works for any H, W.
    """
    n, f = as_tensor(n), as_tensor(f)
    if n.data.shape != f.data.shape:
        raise ShapeError(
            f"circular_conv_fft shapes differ: {n.data.shape} vs {f.data.shape}")
    if n.data.ndim < 2:
        raise ShapeError("circular_conv_fft expects at least 2-D inputs")
    s = n.data.shape[-2:]
    fn = np.fft.rfft2(n.data)
    ff = np.fft.rfft2(f.data)
    out_data = np.fft.irfft2(fn * ff, s=s)

    def bwd(g):
        fg = np.fft.rfft2(g)
        if n.requires_grad:
            _accum(n, np.fft.irfft2(fg * np.conj(ff), s=s))
        if f.requires_grad:
            _accum(f, np.fft.irfft2(fg * np.conj(fn), s=s))

    return _make(out_data, (n, f), bwd)
