import numpy as np
import pytest

from crosscc.errors import FormatError, StateError
from crosscc.nn import (
    ParameterStore,
    Tape,
    Tensor,
    adam_step,
    backward,
    deserialize_params,
    mul,
    serialize_params,
    tsum,
)


def reference_adam(params, grads_per_step, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent Adam trace used as the two-step oracle."""
    p = {k: v.copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(x) for k, x in params.items()}
    for t, grads in enumerate(grads_per_step, start=1):
        for k in p:
            g = grads[k]
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v[k] = beta2 * v[k] + (1 - beta2) * g * g
            mhat = m[k] / (1 - beta1 ** t)
            vhat = v[k] / (1 - beta2 ** t)
            p[k] = p[k] - lr * mhat / (np.sqrt(vhat) + eps)
    return p


class TestAdam:
    def test_first_step_magnitude(self):
        store = ParameterStore()
        t = store.add("w", np.array([1.0]))
        t.grad = np.array([1.0])
        adam_step(store, lr=0.1)
        # bias-corrected mhat = vhat = 1, so the move is lr/(1 + eps)
        assert t.data[0] == pytest.approx(0.9, abs=1e-8)
        assert t.grad is None

    def test_zero_gradient_no_move(self):
        store = ParameterStore()
        t = store.add("w", np.array([2.5]))
        t.grad = np.zeros(1)
        adam_step(store, lr=0.1)
        assert t.data[0] == 2.5

    def test_missing_gradient_rejected(self):
        store = ParameterStore()
        store.add("w", np.ones(2))
        with pytest.raises(StateError):
            adam_step(store, lr=0.1)

    def test_two_steps_match_reference_trace(self, rng):
        params = {"a": rng.random((2, 3)), "b": rng.random(4)}
        grads = [{k: rng.random(v.shape) for k, v in params.items()}
                 for _ in range(2)]
        store = ParameterStore()
        for k, v in params.items():
            store.add(k, v.copy())
        for step in grads:
            for k in params:
                store[k].grad = step[k].copy()
            adam_step(store, lr=0.05)
        expect = reference_adam(params, grads, lr=0.05)
        for k in params:
            assert store[k].data == pytest.approx(expect[k], rel=1e-12)

    def test_trains_a_quadratic(self):
        store = ParameterStore()
        w = store.add("w", np.array([4.0]))
        for _ in range(500):
            with Tape() as tape:
                loss = tsum(mul(w, w))
            backward(tape, loss)
            adam_step(store, lr=0.05)
        assert abs(w.data[0]) < 0.05


class TestSerialization:
    def make_store(self, rng):
        store = ParameterStore()
        store.add("enc.w", rng.random((2, 3, 3, 3)).astype(np.float32))
        store.add("enc.b", np.zeros(2, dtype=np.float32))
        store.add("head", rng.random((4,)).astype(np.float32))
        return store

    def test_round_trip_bit_exact(self, rng):
        store = self.make_store(rng)
        blob = serialize_params(store)
        again = serialize_params(deserialize_params(blob))
        assert blob == again

    def test_round_trip_values_and_names(self, rng):
        store = self.make_store(rng)
        loaded = deserialize_params(serialize_params(store))
        assert loaded.names() == store.names()
        for name, t in store.items():
            assert np.array_equal(loaded[name].data, t.data.astype(np.float32))

    def test_empty_store(self):
        blob = serialize_params(ParameterStore())
        assert len(blob) == 12  # magic + version + count
        assert len(deserialize_params(blob)) == 0

    def test_bad_magic(self):
        blob = serialize_params(ParameterStore())
        with pytest.raises(FormatError, match="magic"):
            deserialize_params(b"XXXX" + blob[4:])

    def test_truncation(self, rng):
        blob = serialize_params(self.make_store(rng))
        with pytest.raises(FormatError, match="truncated"):
            deserialize_params(blob[:-3])

    def test_trailing_garbage(self, rng):
        blob = serialize_params(self.make_store(rng))
        with pytest.raises(FormatError, match="trailing"):
            deserialize_params(blob + b"\x00")

    def test_header_layout(self):
        store = ParameterStore()
        store.add("x", np.array([1.0], dtype=np.float32))
        blob = serialize_params(store)
        assert blob[:4] == b"CCMN"
        assert int.from_bytes(blob[4:8], "little") == 1  # version
        assert int.from_bytes(blob[8:12], "little") == 1  # tensor count
        assert int.from_bytes(blob[12:14], "little") == 1  # name length
        assert blob[14:15] == b"x"
        assert blob[15] == 1  # rank
        assert int.from_bytes(blob[16:20], "little") == 1  # dim
        assert np.frombuffer(blob[20:24], dtype="<f4")[0] == 1.0

    def test_duplicate_name_rejected(self):
        store = ParameterStore()
        store.add("w", np.ones(1))
        with pytest.raises(StateError):
            store.add("w", np.ones(1))
