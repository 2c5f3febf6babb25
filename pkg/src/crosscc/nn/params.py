"""Named parameter storage, the Adam update, and the on-disk tensor format.

File layout (all little-endian):

    magic   4 bytes   b"CCMN"
    version u32       1
    count   u32       number of tensors
    per tensor:
        name_len u16, name bytes (UTF-8)
        rank     u8
        dims     u32 * rank
        data     f32 * prod(dims), row-major

Values are stored as 32-bit floats regardless of the in-memory dtype, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError, StateError
from .autograd import Tensor

MAGIC = b"CCMN"
VERSION = 1


class ParameterStore:
    """Ordered map of named parameter tensors plus Adam state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise StateError(f"duplicate parameter name {name!r}")
        t = data if isinstance(data, Tensor) else Tensor(data, requires_grad=requires_grad)
        t.requires_grad = requires_grad
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def clone(self) -> "ParameterStore":
        out = ParameterStore()
        for name, t in self._params.items():
            out.add(name, t.data.copy(), requires_grad=t.requires_grad)
        return out


def adam_step(store: ParameterStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update over every parameter; clears grads."""
    missing = [n for n, t in store.items() if t.grad is None]
    if missing:
        raise StateError(f"parameters without gradients: {missing[:4]}"
                         + ("..." if len(missing) > 4 else ""))
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in store.items():
        g = p.grad
        m = store._m.get(name)
        v = store._v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        store._m[name] = m
        store._v[name] = v
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.grad = None


def serialize_params(store: ParameterStore) -> bytes:
    """Encode every parameter in insertion order."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(store))
    for name, t in store.items():
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise FormatError(f"parameter name too long: {name[:32]}...")
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        if arr.ndim > 0xFF:
            raise FormatError("tensor rank exceeds format limit")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated stream: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize_params(data: bytes) -> ParameterStore:
    """Decode a parameter stream; tensors come back as float32."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic: not a parameter stream")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (count,) = r.unpack("<I")
    store = ParameterStore()
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I") if rank else ()
        size = 1
        for d in dims:
            size *= d
        raw = r.take(4 * size)
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        store.add(name, arr)
    if r.pos != len(data):
        raise FormatError(
            f"{len(data) - r.pos} trailing bytes after tensor {count}")
    return store
