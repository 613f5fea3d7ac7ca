import numpy as np
import pytest

from amble.errors import AmbleError, NumericalError
from amble.netcore import (DenseNet, VectorAdam, adam_init,
                           adam_update, backward, forward, forward_cached,
                           input_gradient, load_net, net_from_bytes,
                           net_to_bytes, orthogonal_init, save_net, zero_tape)


def naive_forward(net, x):
    """Independent per-neuron re-implementation of the forward pass."""
    h = [float(v) for v in x]
    for W, b, act in zip(net.weights, net.biases, net.activations):
        out = []
        for r in range(W.shape[0]):
            acc = float(b[r])
            for c in range(W.shape[1]):
                acc += float(W[r, c]) * h[c]
            if act == "tanh":
                acc = float(np.tanh(acc))
            elif act == "relu":
                acc = max(acc, 0.0)
            out.append(acc)
        h = out
    return np.array(h)


def fd_gradients(net, x, seed, h=1e-5):
    """Central-difference parameter and input gradients of seed . output."""
    def objective():
        return float(forward(net, x) @ seed)

    d_weights, d_biases = [], []
    for li in range(net.n_layers):
        W = net.weights[li]
        gW = np.zeros_like(W)
        for r in range(W.shape[0]):
            for c in range(W.shape[1]):
                orig = W[r, c]
                W[r, c] = orig + h
                fp = objective()
                W[r, c] = orig - h
                fm = objective()
                W[r, c] = orig
                gW[r, c] = (fp - fm) / (2 * h)
        d_weights.append(gW)
        b = net.biases[li]
        gb = np.zeros_like(b)
        for r in range(b.shape[0]):
            orig = b[r]
            b[r] = orig + h
            fp = objective()
            b[r] = orig - h
            fm = objective()
            b[r] = orig
            gb[r] = (fp - fm) / (2 * h)
        d_biases.append(gb)
    gx = np.zeros_like(x)
    for i in range(x.shape[0]):
        orig = x[i]
        x[i] = orig + h
        fp = objective()
        x[i] = orig - h
        fm = objective()
        x[i] = orig
        gx[i] = (fp - fm) / (2 * h)
    return d_weights, d_biases, gx


def assert_close_rel(actual, expected, rel=1e-4, floor=1e-6):
    denom = np.maximum(np.abs(expected), floor)
    assert np.all(np.abs(actual - expected) / denom < rel)


class TestForward:
    def test_identity_single_layer(self):
        net = DenseNet((3, 3), ("identity",), [np.eye(3)], [np.zeros(3)])
        x = np.array([0.3, -1.2, 2.0])
        np.testing.assert_array_equal(forward(net, x), x)

    def test_constant_map(self):
        b = np.array([0.4, -0.7])
        net = DenseNet((3, 2), ("tanh",), [np.zeros((2, 3))], [b])
        np.testing.assert_allclose(forward(net, np.ones(3)), np.tanh(b))

    def test_matches_independent_oracle(self, rng):
        for _ in range(20):
            dims = (4, 7, 5, 2)
            net = orthogonal_init(dims, ("tanh", "relu", "identity"), rng)
            x = rng.standard_normal(4)
            np.testing.assert_allclose(forward(net, x), naive_forward(net, x),
                                       atol=1e-12)

    def test_batched_matches_single(self, rng):
        net = orthogonal_init((4, 6, 3), ("tanh", "identity"), rng)
        X = rng.standard_normal((5, 4))
        batched = forward(net, X)
        for i in range(5):
            np.testing.assert_allclose(batched[i], forward(net, X[i]), atol=1e-14)

    def test_dimension_mismatch_rejected(self, rng):
        net = orthogonal_init((4, 3), ("identity",), rng)
        with pytest.raises(AmbleError):
            forward(net, np.zeros(5))

    def test_shape_safety_random_configs(self, rng):
        for _ in range(25):
            depth = int(rng.integers(1, 4))
            dims = tuple(int(rng.integers(1, 9)) for _ in range(depth + 1))
            acts = tuple(rng.choice(["tanh", "relu", "identity"])
                         for _ in range(depth))
            net = orthogonal_init(dims, acts, rng)
            out = forward(net, rng.standard_normal(dims[0]))
            assert out.shape == (dims[-1],)


class TestBackward:
    def test_linear_derivatives(self):
        w = np.array([[0.7, -1.3]])
        net = DenseNet((2, 1), ("identity",), [w.copy()], [np.zeros(1)])
        x = np.array([0.4, 2.0])
        out, cache = forward_cached(net, x)
        tape = backward(net, cache, np.ones(1))
        np.testing.assert_allclose(tape.d_weights[0], x[None, :], atol=1e-15)
        np.testing.assert_allclose(tape.d_input, w[0], atol=1e-15)

    def test_parameter_gradients_match_finite_differences(self, rng):
        for trial in range(20):
            depth = int(rng.integers(1, 4))
            dims = tuple(int(rng.integers(2, 33)) for _ in range(depth + 1))
            acts = tuple(rng.choice(["tanh", "relu", "identity"])
                         for _ in range(depth))
            net = orthogonal_init(dims, acts, rng)
            x = rng.standard_normal(dims[0])
            seed = rng.standard_normal(dims[-1])
            out, cache = forward_cached(net, x)
            tape = backward(net, cache, seed)
            dW, db, dx = fd_gradients(net, x, seed)
            for li in range(net.n_layers):
                assert_close_rel(tape.d_weights[li], dW[li])
                assert_close_rel(tape.d_biases[li], db[li])
            assert_close_rel(tape.d_input, dx)

    def test_input_gradient_of_frozen_net(self, rng):
        net = orthogonal_init((6, 12, 1), ("tanh", "identity"), rng)
        x = rng.standard_normal(6)
        grad = input_gradient(net, x)
        _, _, fd = fd_gradients(net, x, np.ones(1))
        assert_close_rel(grad, fd)

    def test_batched_accumulates(self, rng):
        net = orthogonal_init((3, 5, 2), ("tanh", "identity"), rng)
        X = rng.standard_normal((4, 3))
        seeds = rng.standard_normal((4, 2))
        out, cache = forward_cached(net, X)
        tape = backward(net, cache, seeds)
        total = zero_tape(net)
        for i in range(4):
            o, c = forward_cached(net, X[i])
            t = backward(net, c, seeds[i])
            total = total.add(t)
        for li in range(net.n_layers):
            np.testing.assert_allclose(tape.d_weights[li],
                                       total.d_weights[li], atol=1e-12)

    def test_missing_forward_rejected(self, rng):
        net = orthogonal_init((3, 2), ("identity",), rng)
        with pytest.raises(AmbleError):
            backward(net, ([], [], []), np.zeros(2))


class TestAdam:
    def test_zero_gradient_is_identity(self, rng):
        net = orthogonal_init((3, 4, 2), ("tanh", "identity"), rng)
        before = [w.copy() for w in net.weights]
        adam_update(net, zero_tape(net), adam_init(net), 1e-3)
        for w0, w1 in zip(before, net.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_descends_quadratic_scalar(self):
        net = DenseNet((1, 1), ("identity",), [np.array([[1.0]])], [np.zeros(1)])
        state = adam_init(net)
        out, cache = forward_cached(net, np.ones(1))
        tape = backward(net, cache, 2.0 * out)  # d(w^2)/dw at x=1
        adam_update(net, tape, state, 1e-2)
        assert abs(net.weights[0][0, 0]) < 1.0

    def test_converges_on_quadratic_bowl(self, rng):
        net = DenseNet((1, 8), ("identity",),
                       [rng.standard_normal((8, 1))], [rng.standard_normal(8)])
        state = adam_init(net)
        for _ in range(500):
            out, cache = forward_cached(net, np.ones(1))
            tape = backward(net, cache, 2.0 * out)
            adam_update(net, tape, state, 5e-2)
        out = forward(net, np.ones(1))
        assert np.linalg.norm(out) < 1e-2

    def test_nan_gradient_aborts(self, rng):
        net = orthogonal_init((2, 2), ("identity",), rng)
        tape = zero_tape(net)
        tape.d_weights[0][0, 0] = np.nan
        before = net.weights[0].copy()
        with pytest.raises(NumericalError):
            adam_update(net, tape, adam_init(net), 1e-3)
        np.testing.assert_array_equal(net.weights[0], before)

    def test_vector_adam_matches_net_adam(self, rng):
        param = rng.standard_normal(5)
        grad = rng.standard_normal(5)
        va = VectorAdam.like(param)
        p1 = param.copy()
        va.update(p1, grad, 1e-2)
        net = DenseNet((1, 5), ("identity",), [param.copy()[:, None]],
                       [np.zeros(5)])
        tape = zero_tape(net)
        tape.d_weights[0][:] = grad[:, None]
        adam_update(net, tape, adam_init(net), 1e-2)
        np.testing.assert_allclose(net.weights[0][:, 0], p1, atol=1e-15)


class TestSerialization:
    def test_round_trip_lossless(self, rng, tmp_path):
        net = orthogonal_init((7, 16, 16, 3), ("relu", "tanh", "identity"), rng)
        path = tmp_path / "net.bin"
        save_net(net, path)
        loaded = load_net(path)
        assert loaded.dims == net.dims
        assert loaded.activations == net.activations
        for a, b in zip(loaded.weights, net.weights):
            assert np.array_equal(a, b)
        for a, b in zip(loaded.biases, net.biases):
            assert np.array_equal(a, b)

    def test_bytes_round_trip_bit_exact(self, rng):
        net = orthogonal_init((4, 5, 1), ("tanh", "identity"), rng)
        blob = net_to_bytes(net)
        assert net_to_bytes(net_from_bytes(blob)) == blob

    def test_bad_magic_rejected(self):
        with pytest.raises(AmbleError, match="magic"):
            net_from_bytes(b"JUNKxxxxxxxxxxxxxxxx")

    def test_bad_version_rejected(self, rng):
        net = orthogonal_init((2, 1), ("identity",), rng)
        blob = bytearray(net_to_bytes(net))
        blob[4] = 99
        with pytest.raises(AmbleError, match="version"):
            net_from_bytes(bytes(blob))
