import math

import numpy as np
import pytest

from kanids.gradcheck import check_layer
from kanids.kan import ConvKan, KanLinear, fit_smooth_1d, silu, silu_deriv
from kanids.splines import make_grid

from oracles import naive_basis_deriv, naive_basis_value


def scalar_silu(u):
    return u / (1.0 + math.exp(-u))


def zero_params(layer):
    for v in layer.params.entries.values():
        v[...] = 0.0


def edge_oracle(layer, j, i, u):
    """Independent per-edge evaluation via the recursive basis oracle."""
    e = layer.params.entries
    phi = e["base_weight"][j, i] * scalar_silu(u)
    for k in range(layer.grid.n_basis):
        phi += e["spline_coeffs"][j, i, k] * naive_basis_value(
            layer.grid.knots, layer.grid.degree, k, u)
    return e["edge_scale"][j, i] * phi


class TestKanEdge:
    def test_zero_params_zero_everywhere(self):
        layer = KanLinear(2, 2, make_grid(-1, 1, 5, 3))
        zero_params(layer)
        for u in (-0.7, 0.0, 0.9):
            assert layer.edge(0, 1, u) == 0.0

    def test_silu_base_zero_at_origin(self):
        layer = KanLinear(1, 1, make_grid(-1, 1, 5, 3))
        zero_params(layer)
        layer.params.entries["base_weight"][...] = 1.0
        layer.params.entries["edge_scale"][...] = 1.0
        assert layer.edge(0, 0, 0.0) == 0.0

    def test_one_hot_coefficient_matches_basis(self):
        grid = make_grid(-1, 1, 5, 3)
        layer = KanLinear(2, 3, grid)
        zero_params(layer)
        layer.params.entries["edge_scale"][...] = 2.5
        layer.params.entries["spline_coeffs"][1, 0, 4] = 0.7
        for u in (-0.4, 0.1, 0.55):
            expected = 2.5 * 0.7 * naive_basis_value(grid.knots, 3, 4, u)
            assert abs(layer.edge(0, 1, u) - expected) < 1e-12

    def test_index_out_of_range(self):
        layer = KanLinear(2, 3)
        with pytest.raises(IndexError):
            layer.edge(2, 0, 0.1)
        with pytest.raises(IndexError):
            layer.edge(0, 3, 0.1)


class TestKanForward:
    def test_single_edge_reduction(self):
        rng = np.random.default_rng(0)
        layer = KanLinear(1, 1, rng=rng)
        x = rng.uniform(-0.9, 0.9, size=(4, 1))
        out = layer.forward(x)
        for b in range(4):
            assert abs(out[b, 0] - layer.edge(0, 0, x[b, 0])) < 1e-12

    def test_zero_params_zero_output(self):
        layer = KanLinear(3, 2)
        zero_params(layer)
        out = layer.forward(np.random.default_rng(1).uniform(-1, 1, (5, 3)))
        np.testing.assert_array_equal(out, 0.0)

    def test_matches_edge_loop_oracle(self):
        rng = np.random.default_rng(2)
        layer = KanLinear(3, 2, rng=rng)
        x = rng.uniform(-0.95, 0.95, size=(4, 3))
        out = layer.forward(x)
        for b in range(4):
            for j in range(2):
                expected = sum(edge_oracle(layer, j, i, x[b, i]) for i in range(3))
                assert abs(out[b, j] - expected) < 1e-12

    def test_param_count(self):
        # in * out * (G + r + 2) exactly
        layer = KanLinear(41, 64, make_grid(-1, 1, 5, 3))
        assert layer.param_count() == 41 * 64 * (5 + 3 + 2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            KanLinear(3, 2).forward(np.zeros((4, 5)))


class TestKanBackward:
    def test_zero_grad_out(self):
        rng = np.random.default_rng(3)
        layer = KanLinear(3, 2, rng=rng)
        layer.forward(rng.uniform(-0.9, 0.9, (4, 3)))
        dx = layer.backward(np.zeros((4, 2)))
        np.testing.assert_array_equal(dx, 0.0)
        for g in layer.params.grads.values():
            np.testing.assert_array_equal(g, 0.0)

    def test_single_edge_input_grad_closed_form(self):
        grid = make_grid(-1, 1, 5, 3)
        layer = KanLinear(2, 2, grid)
        zero_params(layer)
        e = layer.params.entries
        e["edge_scale"][1, 0] = 1.7
        e["base_weight"][1, 0] = 0.4
        coeffs = np.random.default_rng(4).normal(size=grid.n_basis)
        e["spline_coeffs"][1, 0] = coeffs
        u = 0.37
        x = np.array([[u, 0.1]])
        layer.forward(x)
        g = np.zeros((1, 2))
        g[0, 1] = 2.0
        dx = layer.backward(g)
        spline_d = sum(c * naive_basis_deriv(grid.knots, 3, k, u)
                       for k, c in enumerate(coeffs))
        s = 1.0 / (1.0 + math.exp(-u))
        silu_d = s * (1.0 + u * (1.0 - s))
        expected = 1.7 * (0.4 * silu_d + spline_d) * 2.0
        assert abs(dx[0, 0] - expected) < 1e-12

    @pytest.mark.parametrize("seed", range(4))
    def test_gradcheck(self, seed):
        rng = np.random.default_rng(seed)
        layer = KanLinear(3, 2, make_grid(-1, 1, 4, 3),
                          rng=np.random.default_rng(seed * 7))
        x = rng.uniform(-0.9, 0.9, size=(3, 3))
        assert check_layer(layer, x, seed) < 1e-4

    def test_backward_without_forward(self):
        with pytest.raises(RuntimeError, match="no cached forward"):
            KanLinear(3, 2).backward(np.zeros((4, 2)))


class TestConvKan:
    def test_zero_params_zero_output(self):
        layer = ConvKan(2, 3, kernel=3, pad=1)
        zero_params(layer)
        out = layer.forward(np.random.default_rng(0).uniform(-1, 1, (2, 2, 4, 4)))
        np.testing.assert_array_equal(out, 0.0)

    def test_one_by_one_matches_kan_linear_pixelwise(self):
        rng = np.random.default_rng(1)
        grid = make_grid(-1, 1, 4, 3)
        conv = ConvKan(1, 3, kernel=1, pad=0, grid=grid, rng=rng)
        lin = KanLinear(1, 3, grid)
        for name in lin.params.entries:
            lin.params.entries[name][...] = conv.params.entries[name]
        x = rng.uniform(-0.9, 0.9, size=(2, 1, 3, 3))
        out = conv.forward(x)
        for b in range(2):
            for i in range(3):
                for j in range(3):
                    ref = lin.forward(x[b:b + 1, 0, i, j].reshape(1, 1))
                    np.testing.assert_allclose(out[b, :, i, j], ref[0], atol=1e-14)

    def test_matches_loop_plus_edge_oracle(self):
        rng = np.random.default_rng(2)
        grid = make_grid(-1, 1, 3, 3)
        layer = ConvKan(2, 2, kernel=3, pad=0, grid=grid, rng=rng)
        x = rng.uniform(-0.95, 0.95, size=(1, 2, 4, 4))
        out = layer.forward(x)
        e = layer.params.entries
        coeffs = e["spline_coeffs"].reshape(2, 2, 3, 3, grid.n_basis)
        base_w = e["base_weight"].reshape(2, 2, 3, 3)
        scale = e["edge_scale"].reshape(2, 2, 3, 3)
        for o in range(2):
            for i in range(2):
                for j in range(2):
                    acc = 0.0
                    for c in range(2):
                        for m in range(3):
                            for n in range(3):
                                u = x[0, c, i + m, j + n]
                                phi = base_w[o, c, m, n] * scalar_silu(u)
                                for k in range(grid.n_basis):
                                    phi += coeffs[o, c, m, n, k] * naive_basis_value(
                                        grid.knots, 3, k, u)
                                acc += scale[o, c, m, n] * phi
                    assert abs(out[0, o, i, j] - acc) < 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_gradcheck(self, seed):
        rng = np.random.default_rng(seed)
        layer = ConvKan(2, 2, kernel=2, pad=0, grid=make_grid(-1, 1, 3, 3),
                        rng=np.random.default_rng(seed * 7))
        x = rng.uniform(-0.9, 0.9, size=(2, 2, 3, 3))
        assert check_layer(layer, x, seed) < 1e-4

    def test_param_count(self):
        layer = ConvKan(2, 3, kernel=3, grid=make_grid(-1, 1, 5, 3))
        assert layer.param_count() == 3 * 2 * 9 * (5 + 3 + 2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            ConvKan(2, 2).forward(np.zeros((1, 3, 4, 4)))


class TestSilu:
    def test_values(self):
        assert silu(np.array([0.0]))[0] == 0.0
        u = np.array([-2.0, -0.5, 0.3, 1.7])
        np.testing.assert_allclose(silu(u), [scalar_silu(v) for v in u])

    def test_derivative_matches_fd(self):
        u = np.linspace(-3, 3, 41)
        h = 1e-6
        fd = (silu(u + h) - silu(u - h)) / (2 * h)
        np.testing.assert_allclose(silu_deriv(u), fd, atol=1e-9)


class TestFitSmooth:
    def test_constant_target_near_zero(self):
        losses = fit_smooth_1d(lambda x: 0.0, [2, 4], steps=300, seed=0)
        assert all(l < 1e-6 for l in losses)

    def test_identity_target_near_zero(self):
        losses = fit_smooth_1d(lambda x: x, [1, 3], steps=800, seed=0)
        assert all(l < 1e-4 for l in losses)
