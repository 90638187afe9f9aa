import numpy as np
import pytest

from kanids.gradcheck import check_layer
from kanids.layers import Conv2d, Dense, Lstm, LstmState, MaxPool2d

from oracles import naive_conv2d, naive_dense, naive_maxpool


def zero_params(layer):
    for v in layer.params.entries.values():
        v[...] = 0.0


class TestDense:
    def test_zero_weights_sigmoid_half(self):
        layer = Dense(3, 2, activation="sigmoid")
        zero_params(layer)
        out = layer.forward(np.random.default_rng(0).normal(size=(4, 3)))
        np.testing.assert_allclose(out, 0.5)

    def test_identity_weight_passthrough(self):
        layer = Dense(3, 3, activation="identity")
        layer.w[...] = np.eye(3)
        layer.b[...] = 0.0
        x = np.random.default_rng(1).normal(size=(5, 3))
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_matches_naive_matmul(self):
        rng = np.random.default_rng(2)
        layer = Dense(3, 2, activation="identity", rng=rng)
        x = rng.normal(size=(4, 3))
        expected = naive_dense(x, layer.w, layer.b)
        assert np.max(np.abs(layer.forward(x) - expected)) < 1e-12

    def test_zero_grad_out(self):
        rng = np.random.default_rng(3)
        layer = Dense(3, 2, rng=rng)
        layer.forward(rng.normal(size=(4, 3)))
        dx = layer.backward(np.zeros((4, 2)))
        np.testing.assert_array_equal(dx, 0.0)
        for g in layer.params.grads.values():
            np.testing.assert_array_equal(g, 0.0)

    def test_identity_closed_form_weight_grad(self):
        rng = np.random.default_rng(4)
        layer = Dense(3, 2, activation="identity", rng=rng)
        x = rng.normal(size=(1, 3))
        g = rng.normal(size=(1, 2))
        layer.forward(x)
        layer.backward(g)
        np.testing.assert_allclose(layer.params.grads["w"], x.T @ g)

    @pytest.mark.parametrize("seed", range(4))
    def test_gradcheck(self, seed):
        rng = np.random.default_rng(seed)
        layer = Dense(4, 3, activation="tanh", rng=rng)
        assert check_layer(layer, rng.normal(size=(3, 4)), seed) < 1e-4

    def test_shape_mismatch(self):
        layer = Dense(3, 2)
        with pytest.raises(ValueError, match="shape mismatch"):
            layer.forward(np.zeros((4, 5)))

    def test_backward_without_forward(self):
        with pytest.raises(RuntimeError, match="no cached forward"):
            Dense(3, 2).backward(np.zeros((4, 2)))

    def test_forward_deterministic(self):
        rng = np.random.default_rng(5)
        layer = Dense(6, 4, activation="tanh", rng=rng)
        x = rng.normal(size=(8, 6))
        a = layer.forward(x)
        b = layer.forward(x)
        assert np.array_equal(a, b)


class TestConv2d:
    def test_one_by_one_identity(self):
        layer = Conv2d(1, 1, kernel=1, activation="identity")
        layer.kernel[...] = 1.0
        layer.bias[...] = 0.0
        x = np.random.default_rng(0).normal(size=(2, 1, 4, 4))
        np.testing.assert_allclose(layer.forward(x), x)

    def test_zero_kernel_constant_bias(self):
        layer = Conv2d(1, 2, kernel=3, pad=1, activation="identity")
        layer.kernel[...] = 0.0
        layer.bias[...] = 5.0
        out = layer.forward(np.random.default_rng(1).normal(size=(1, 1, 4, 4)))
        np.testing.assert_allclose(out, 5.0)

    @pytest.mark.parametrize("pad", [0, 1])
    def test_matches_naive_loops(self, pad):
        rng = np.random.default_rng(2)
        layer = Conv2d(1, 2, kernel=3, pad=pad, activation="identity", rng=rng)
        x = rng.normal(size=(1, 1, 5, 5))
        expected = naive_conv2d(x, layer.kernel, layer.bias, pad)
        assert np.max(np.abs(layer.forward(x) - expected)) < 1e-12

    def test_zero_grad_out(self):
        rng = np.random.default_rng(3)
        layer = Conv2d(2, 2, kernel=2, rng=rng)
        out = layer.forward(rng.normal(size=(2, 2, 4, 4)))
        layer.backward(np.zeros_like(out))
        for g in layer.params.grads.values():
            np.testing.assert_array_equal(g, 0.0)

    def test_single_pixel_grad_is_input_patch(self):
        rng = np.random.default_rng(4)
        layer = Conv2d(1, 1, kernel=3, pad=0, activation="identity", rng=rng)
        x = rng.normal(size=(1, 1, 5, 5))
        out = layer.forward(x)
        g = np.zeros_like(out)
        g[0, 0, 1, 2] = 1.0
        layer.backward(g)
        np.testing.assert_allclose(layer.params.grads["kernel"][0, 0],
                                   x[0, 0, 1:4, 2:5])

    @pytest.mark.parametrize("seed", range(4))
    def test_gradcheck(self, seed):
        rng = np.random.default_rng(seed)
        layer = Conv2d(2, 3, kernel=2, pad=seed % 2, activation="tanh",
                       rng=rng)
        assert check_layer(layer, rng.normal(size=(2, 2, 4, 4)), seed) < 1e-4

    def test_kernel_larger_than_input(self):
        layer = Conv2d(1, 1, kernel=5, pad=0)
        with pytest.raises(ValueError, match="larger than"):
            layer.forward(np.zeros((1, 1, 3, 3)))


class TestMaxPool:
    def test_constant_input_first_index_routing(self):
        layer = MaxPool2d(2)
        x = np.ones((1, 1, 4, 4))
        out = layer.forward(x)
        np.testing.assert_allclose(out, 1.0)
        dx = layer.backward(np.ones_like(out))
        expected = np.zeros((1, 1, 4, 4))
        expected[0, 0, ::2, ::2] = 1.0  # first element of each window
        np.testing.assert_array_equal(dx, expected)

    def test_window_one_is_identity(self):
        layer = MaxPool2d(1)
        x = np.random.default_rng(0).normal(size=(2, 3, 3, 3))
        np.testing.assert_array_equal(layer.forward(x), x)
        dx = layer.backward(x * 2)
        np.testing.assert_array_equal(dx, x * 2)

    def test_matches_naive(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 2, 4, 4))
        out = MaxPool2d(2).forward(x)
        np.testing.assert_array_equal(out, naive_maxpool(x, 2))

    def test_padding_path_matches_naive(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 1, 5, 7))
        out = MaxPool2d(2).forward(x)
        np.testing.assert_array_equal(out, naive_maxpool(x, 2))

    def test_gradient_mass_preserved(self):
        rng = np.random.default_rng(3)
        layer = MaxPool2d(2)
        x = rng.normal(size=(2, 2, 4, 4))
        out = layer.forward(x)
        g = rng.normal(size=out.shape)
        dx = layer.backward(g)
        assert abs(dx.sum() - g.sum()) < 1e-12


class TestLstm:
    def test_zero_params_zero_state(self):
        layer = Lstm(2, 3)
        zero_params(layer)
        state = layer.step(layer.zero_state(4),
                           np.random.default_rng(0).normal(size=(4, 2)))
        np.testing.assert_allclose(state.cell, 0.0)
        np.testing.assert_allclose(state.hidden, 0.0)

    def test_zero_params_gates_half(self):
        layer = Lstm(2, 3)
        zero_params(layer)
        caches = []
        layer.step(layer.zero_state(1), np.zeros((1, 2)), caches)
        _, f, i, o, c_bar, _, _ = caches[0]
        np.testing.assert_allclose(f, 0.5)
        np.testing.assert_allclose(i, 0.5)
        np.testing.assert_allclose(o, 0.5)
        np.testing.assert_allclose(c_bar, 0.0)

    def test_gate_saturation_carries_memory(self):
        layer = Lstm(2, 3)
        zero_params(layer)
        layer.params.entries["b_f"][...] = 50.0
        layer.params.entries["b_i"][...] = -50.0
        c_prev = np.random.default_rng(1).normal(size=(2, 3))
        state = layer.step(LstmState(np.zeros((2, 3)), c_prev),
                           np.random.default_rng(2).normal(size=(2, 2)))
        np.testing.assert_allclose(state.cell, c_prev, atol=1e-12)

    def test_sequence_t1_equals_step(self):
        rng = np.random.default_rng(3)
        layer = Lstm(2, 3, rng=rng)
        x = rng.normal(size=(4, 1, 2))
        h_seq = layer.forward(x)
        state = layer.step(layer.zero_state(4), x[:, 0, :])
        np.testing.assert_array_equal(h_seq, state.hidden)

    def test_zero_params_sequence_is_zero(self):
        layer = Lstm(2, 3)
        zero_params(layer)
        x = np.tile(np.random.default_rng(4).normal(size=(2, 1, 2)), (1, 5, 1))
        np.testing.assert_allclose(layer.forward(x), 0.0)

    def test_empty_sequence(self):
        layer = Lstm(2, 3)
        with pytest.raises(ValueError, match="empty sequence"):
            layer.forward(np.zeros((2, 0, 2)))

    @pytest.mark.parametrize("steps", [3, 4])
    def test_gradcheck_through_time(self, steps):
        rng = np.random.default_rng(steps)
        layer = Lstm(2, 3, rng=rng)
        x = rng.normal(size=(2, steps, 2))
        assert check_layer(layer, x, steps) < 1e-4

    def test_shape_mismatch(self):
        layer = Lstm(2, 3)
        with pytest.raises(ValueError, match="shape mismatch"):
            layer.forward(np.zeros((2, 3, 5)))
