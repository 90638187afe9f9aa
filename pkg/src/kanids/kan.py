"""KAN layers: spline-parametrized edge functions on dense and conv graphs.

Every edge (i -> j) carries its own learnable univariate function

    a_ij * ( base_w_ij * silu(u) + sum_k coeff_ijk * B_k(u) )

where the B_k are the fixed B-spline basis functions of the layer's grid and
silu(u) = u * sigmoid(u) is a residual base term that keeps training stable
when the spline part is near zero.  The per-edge scale a_ij is kept as an
explicit trainable parameter.  A layer output is the plain sum of its edge
functions; there is no bias term.
"""

from __future__ import annotations

import numpy as np

from kanids.layers import Layer, col2im, glorot_uniform, im2col, sigmoid
from kanids.splines import SplineGrid, basis_and_deriv, make_grid


def silu(u: np.ndarray) -> np.ndarray:
    return u * sigmoid(u)


def silu_deriv(u: np.ndarray) -> np.ndarray:
    s = sigmoid(u)
    return s * (1.0 + u * (1.0 - s))


def _init_edge_params(params, rng, out_dim: int, in_dim: int, n_basis: int):
    coeffs = rng.uniform(-0.1, 0.1, size=(out_dim, in_dim, n_basis))
    coeffs /= np.sqrt(n_basis)
    params.add("spline_coeffs", coeffs)
    params.add("base_weight", glorot_uniform(rng, (out_dim, in_dim),
                                             in_dim, out_dim))
    params.add("edge_scale", np.ones((out_dim, in_dim)))


def _edge_forward(entries, bas: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Summed edge functions: (N, in, K) basis + (N, in) silu -> (N, out)."""
    coeffs = entries["spline_coeffs"]
    scale = entries["edge_scale"]
    out_dim, in_dim, k = coeffs.shape
    scaled = (coeffs * scale[:, :, None]).reshape(out_dim, in_dim * k)
    n = bas.shape[0]
    out = bas.reshape(n, in_dim * k) @ scaled.T
    out += s @ (scale * entries["base_weight"]).T
    return out


def _edge_backward(entries, grads, g: np.ndarray, bas: np.ndarray,
                   dbas: np.ndarray, s: np.ndarray, sp: np.ndarray) -> np.ndarray:
    """Accumulate the three edge-parameter gradients; return d(input)."""
    coeffs = entries["spline_coeffs"]
    base_w = entries["base_weight"]
    scale = entries["edge_scale"]
    out_dim, in_dim, k = coeffs.shape
    n = g.shape[0]

    # m[o,i,k] = sum_n g[n,o] * B_k(x[n,i]);  sil[o,i] = sum_n g[n,o] * silu(x[n,i])
    m = (g.T @ bas.reshape(n, in_dim * k)).reshape(out_dim, in_dim, k)
    sil = g.T @ s
    grads["spline_coeffs"] += m * scale[:, :, None]
    grads["base_weight"] += sil * scale
    grads["edge_scale"] += base_w * sil + (coeffs * m).sum(axis=2)

    scaled = (coeffs * scale[:, :, None]).reshape(out_dim, in_dim * k)
    dx_spline = ((g @ scaled).reshape(n, in_dim, k) * dbas).sum(axis=2)
    dx_base = (g @ (scale * base_w)) * sp
    return dx_spline + dx_base


class KanLinear(Layer):
    """Fully-connected layer whose weights are learnable spline functions."""

    def __init__(self, in_dim: int, out_dim: int, grid: SplineGrid | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.grid = grid if grid is not None else make_grid(-1, 1, 5, 3)
        _init_edge_params(self.params, rng, out_dim, in_dim, self.grid.n_basis)
        self._cache = None

    def edge(self, i: int, j: int, u: float) -> float:
        """Value of the single edge function from input i to output j at u."""
        if not (0 <= i < self.in_dim and 0 <= j < self.out_dim):
            raise IndexError(f"edge index out of range: ({i}, {j})")
        bas, _ = basis_and_deriv(self.grid, np.array([u]))
        e = self.params.entries
        phi = e["base_weight"][j, i] * float(silu(np.array([u]))[0]) \
            + float(e["spline_coeffs"][j, i] @ bas[0])
        return float(e["edge_scale"][j, i] * phi)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(
                f"shape mismatch: expected (batch, {self.in_dim}), got {x.shape}")
        n = x.shape[0]
        bas, dbas = basis_and_deriv(self.grid, x)
        bas = bas.reshape(n, self.in_dim, -1)
        dbas = dbas.reshape(n, self.in_dim, -1)
        s, sp = silu(x), silu_deriv(x)
        self._cache = (bas, dbas, s, sp)
        return _edge_forward(self.params.entries, bas, s)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        bas, dbas, s, sp = self._require_cache(self._cache)
        if grad_out.shape != (bas.shape[0], self.out_dim):
            raise ValueError(
                f"shape mismatch: grad {grad_out.shape} vs (batch, {self.out_dim})")
        return _edge_backward(self.params.entries, self.params.grads,
                              grad_out, bas, dbas, s, sp)


class ConvKan(Layer):
    """Stride-1 convolution where every kernel tap is a spline edge function.

    Equivalent to a KanLinear over im2col patches, with the edge bank shared
    across spatial positions: one univariate function per
    (out-channel, in-channel, kernel-position) triple.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, pad: int = 0,
                 grid: SplineGrid | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in = c_in
        self.c_out = c_out
        self.kernel_size = kernel
        self.pad = pad
        self.grid = grid if grid is not None else make_grid(-1, 1, 5, 3)
        self.taps = c_in * kernel * kernel
        _init_edge_params(self.params, rng, c_out, self.taps, self.grid.n_basis)
        self._cache = None

    def out_spatial(self, h: int, w: int) -> tuple[int, int]:
        k = self.kernel_size
        ho = h + 2 * self.pad - k + 1
        wo = w + 2 * self.pad - k + 1
        if ho < 1 or wo < 1:
            raise ValueError(
                f"kernel {k}x{k} larger than padded input {h}x{w} (pad={self.pad})")
        return ho, wo

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(
                f"shape mismatch: expected (batch, {self.c_in}, H, W), got {x.shape}")
        bsz, _, h, w = x.shape
        ho, wo = self.out_spatial(h, w)
        cols = im2col(x, self.kernel_size, self.kernel_size, self.pad)
        flat = cols.reshape(bsz * ho * wo, self.taps)
        bas, dbas = basis_and_deriv(self.grid, flat)
        bas = bas.reshape(flat.shape[0], self.taps, -1)
        dbas = dbas.reshape(flat.shape[0], self.taps, -1)
        s, sp = silu(flat), silu_deriv(flat)
        out = _edge_forward(self.params.entries, bas, s)
        self._cache = (x.shape, (ho, wo), bas, dbas, s, sp)
        return out.reshape(bsz, ho * wo, self.c_out).transpose(0, 2, 1) \
                  .reshape(bsz, self.c_out, ho, wo)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_shape, (ho, wo), bas, dbas, s, sp = self._require_cache(self._cache)
        bsz = x_shape[0]
        if grad_out.shape != (bsz, self.c_out, ho, wo):
            raise ValueError(
                f"shape mismatch: grad {grad_out.shape} vs forward output")
        g = grad_out.reshape(bsz, self.c_out, ho * wo).transpose(0, 2, 1) \
                    .reshape(bsz * ho * wo, self.c_out)
        dflat = _edge_backward(self.params.entries, self.params.grads,
                               g, bas, dbas, s, sp)
        dcols = dflat.reshape(bsz, ho * wo, self.taps)
        return col2im(dcols, x_shape, self.kernel_size, self.kernel_size, self.pad)


def fit_smooth_1d(target, grid_sizes, degree: int = 3, n_points: int = 256,
                  steps: int = 1500, lr: float = 0.05, seed: int = 0):
    """Fit a 1 -> 1 spline layer to a scalar function at several grid sizes.

    Every grid size gets the identical seed, sample points and step budget;
    returns the final mean-squared training loss for each.  Used to check
    that refinement does not hurt: for smooth targets the losses should be
    nonincreasing in the grid size.
    """
    from kanids.train import AdamW, TrainConfig

    x = np.linspace(-1, 1, n_points).reshape(-1, 1)
    y = np.array([float(target(v)) for v in x[:, 0]]).reshape(-1, 1)
    losses = []
    for size in grid_sizes:
        layer = KanLinear(1, 1, make_grid(-1, 1, int(size), degree),
                          rng=np.random.default_rng(seed))
        opt = AdamW(TrainConfig(learning_rate=lr, weight_decay=0.0, seed=seed))
        loss = np.inf
        for _ in range(steps):
            pred = layer.forward(x)
            diff = pred - y
            loss = float(np.mean(diff * diff))
            layer.params.zero_grads()
            layer.backward(2.0 * diff / n_points)
            opt.step([layer.params])
        losses.append(loss)
    return losses
