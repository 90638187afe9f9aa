"""Differentiable layer primitives with explicit forward and backward passes.

No expression-graph autodiff: each layer caches what its own backward needs
and accumulates parameter gradients into a buffer of matching shape.  A layer
instance is single-owner during a training step; all values are float64
numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, out: (z > 0).astype(np.float64)),
    "sigmoid": (sigmoid, lambda z, out: out * (1.0 - out)),
    "tanh": (np.tanh, lambda z, out: 1.0 - out * out),
    "identity": (lambda z: z, lambda z, out: np.ones_like(z)),
}


class LayerParams:
    """Named parameter tensors with parallel same-shaped gradient buffers."""

    def __init__(self):
        self.entries: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.entries:
            raise ValueError(f"duplicate parameter name: {name}")
        value = np.asarray(value, dtype=np.float64)
        self.entries[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def count(self) -> int:
        return sum(v.size for v in self.entries.values())


class Layer:
    """Base class: parameter container plus the forward/backward contract."""

    def __init__(self):
        self.params = LayerParams()

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param_count(self) -> int:
        return self.params.count()

    def _require_cache(self, cache):
        if cache is None:
            raise RuntimeError(f"{type(self).__name__}: no cached forward pass")
        return cache


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int,
                   fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


class Dense(Layer):
    """Affine map with a pointwise activation: out = act(x @ W + b)."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {activation}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.w = self.params.add("w", glorot_uniform(rng, (in_dim, out_dim),
                                                     in_dim, out_dim))
        self.b = self.params.add("b", np.zeros(out_dim))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(
                f"shape mismatch: expected (batch, {self.in_dim}), got {x.shape}")
        act, _ = ACTIVATIONS[self.activation]
        pre = x @ self.w + self.b
        out = act(pre)
        self._cache = (x, pre, out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, pre, out = self._require_cache(self._cache)
        if grad_out.shape != out.shape:
            raise ValueError(
                f"shape mismatch: grad {grad_out.shape} vs output {out.shape}")
        _, dact = ACTIVATIONS[self.activation]
        dpre = grad_out * dact(pre, out)
        self.params.grads["w"] += x.T @ dpre
        self.params.grads["b"] += dpre.sum(axis=0)
        return dpre @ self.w.T


def im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """Extract stride-1 patches: (B, C, H, W) -> (B, Ho*Wo, C*kh*kw)."""
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    ho, wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(dcols: np.ndarray, x_shape, kh: int, kw: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: scatter patch gradients back onto the input."""
    b, c, h, w = x_shape
    ho = h + 2 * pad - kh + 1
    wo = w + 2 * pad - kw + 1
    d = dcols.reshape(b, ho, wo, c, kh, kw)
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    for m in range(kh):
        for q in range(kw):
            dxp[:, :, m:m + ho, q:q + wo] += d[:, :, :, :, m, q].transpose(0, 3, 1, 2)
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


class Conv2d(Layer):
    """Stride-1 2D convolution with zero padding and pointwise activation."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, pad: int = 0,
                 activation: str = "relu", rng: np.random.Generator | None = None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {activation}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in = c_in
        self.c_out = c_out
        self.kernel_size = kernel
        self.pad = pad
        self.activation = activation
        fan = c_in * kernel * kernel
        self.kernel = self.params.add(
            "kernel", glorot_uniform(rng, (c_out, c_in, kernel, kernel),
                                     fan, c_out * kernel * kernel))
        self.bias = self.params.add("bias", np.zeros(c_out))
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
        wmat = self.kernel.reshape(self.c_out, -1)
        pre = cols @ wmat.T + self.bias
        act, _ = ACTIVATIONS[self.activation]
        out = act(pre)
        self._cache = (x.shape, cols, pre, out)
        return out.transpose(0, 2, 1).reshape(bsz, self.c_out, ho, wo)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_shape, cols, pre, out = self._require_cache(self._cache)
        bsz = x_shape[0]
        g = grad_out.reshape(bsz, self.c_out, -1).transpose(0, 2, 1)
        if g.shape != out.shape:
            raise ValueError(
                f"shape mismatch: grad {grad_out.shape} incompatible with forward")
        _, dact = ACTIVATIONS[self.activation]
        dpre = g * dact(pre, out)
        wmat = self.kernel.reshape(self.c_out, -1)
        flat_d = dpre.reshape(-1, self.c_out)
        flat_c = cols.reshape(-1, cols.shape[2])
        self.params.grads["kernel"] += (flat_d.T @ flat_c).reshape(self.kernel.shape)
        self.params.grads["bias"] += flat_d.sum(axis=0)
        dcols = dpre @ wmat
        return col2im(dcols, x_shape, self.kernel_size, self.kernel_size, self.pad)


class MaxPool2d(Layer):
    """Window max-pool; gradient routes to the first maximal element only.

    Spatial dims that do not divide the window are padded with -inf, so the
    padding can never win the max.
    """

    def __init__(self, window: int):
        super().__init__()
        if window < 1:
            raise ValueError(f"invalid window: {window}")
        self.window = window
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ValueError(f"shape mismatch: expected 4-d input, got {x.shape}")
        b, c, h, w = x.shape
        k = self.window
        ho, wo = -(-h // k), -(-w // k)
        xp = x
        if ho * k != h or wo * k != w:
            xp = np.full((b, c, ho * k, wo * k), -np.inf)
            xp[:, :, :h, :w] = x
        tiles = xp.reshape(b, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
        tiles = tiles.reshape(b, c, ho, wo, k * k)
        idx = np.argmax(tiles, axis=-1)  # first occurrence = lowest flat index
        out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, idx)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_shape, idx = self._require_cache(self._cache)
        if grad_out.shape != idx.shape:
            raise ValueError(
                f"shape mismatch: grad {grad_out.shape} vs pooled {idx.shape}")
        b, c, h, w = x_shape
        k = self.window
        ho, wo = idx.shape[2], idx.shape[3]
        dtiles = np.zeros((b, c, ho, wo, k * k))
        np.put_along_axis(dtiles, idx[..., None], grad_out[..., None], axis=-1)
        dxp = dtiles.reshape(b, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
        dxp = dxp.reshape(b, c, ho * k, wo * k)
        return dxp[:, :, :h, :w]


@dataclass
class LstmState:
    """Hidden and cell state, both (batch, hidden_dim)."""

    hidden: np.ndarray
    cell: np.ndarray


class Lstm(Layer):
    """Single LSTM layer; each gate has one weight matrix over [h, z].

    ``forward`` consumes a full (batch, T, in_dim) sequence, returns the
    final hidden state h_T and backpropagates through all T steps.
    """

    GATES = ("f", "i", "o", "c")

    def __init__(self, in_dim: int, hidden_dim: int,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        cat = hidden_dim + in_dim
        for gate in self.GATES:
            self.params.add(f"w_{gate}", glorot_uniform(rng, (cat, hidden_dim),
                                                        cat, hidden_dim))
            bias = np.zeros(hidden_dim)
            if gate == "f":
                bias += 1.0  # open forget gate at init
            self.params.add(f"b_{gate}", bias)
        self._cache = None

    def zero_state(self, batch: int) -> LstmState:
        return LstmState(np.zeros((batch, self.hidden_dim)),
                         np.zeros((batch, self.hidden_dim)))

    def _stacked_weights(self) -> tuple[np.ndarray, np.ndarray]:
        # one (cat, 4*hidden) matrix so the four gates share a single matmul
        p = self.params.entries
        w = np.concatenate([p[f"w_{g}"] for g in self.GATES], axis=1)
        b = np.concatenate([p[f"b_{g}"] for g in self.GATES])
        return w, b

    def step(self, state: LstmState, z_t: np.ndarray,
             caches: list | None = None,
             stacked: tuple[np.ndarray, np.ndarray] | None = None) -> LstmState:
        """One cell update from ``state`` on input ``z_t`` (batch, in_dim)."""
        if z_t.ndim != 2 or z_t.shape[1] != self.in_dim:
            raise ValueError(
                f"shape mismatch: expected (batch, {self.in_dim}), got {z_t.shape}")
        if state.hidden.shape != state.cell.shape or \
                state.hidden.shape != (z_t.shape[0], self.hidden_dim):
            raise ValueError("shape mismatch: state incompatible with input batch")
        w, b = stacked if stacked is not None else self._stacked_weights()
        hd = self.hidden_dim
        cat = np.concatenate([state.hidden, z_t], axis=1)
        pre = cat @ w + b
        f = sigmoid(pre[:, :hd])
        i = sigmoid(pre[:, hd:2 * hd])
        o = sigmoid(pre[:, 2 * hd:3 * hd])
        c_bar = np.tanh(pre[:, 3 * hd:])
        c = f * state.cell + i * c_bar
        tanh_c = np.tanh(c)
        h = o * tanh_c
        if caches is not None:
            caches.append((cat, f, i, o, c_bar, state.cell, tanh_c))
        return LstmState(h, c)

    def forward(self, xs: np.ndarray) -> np.ndarray:
        if xs.ndim != 3 or xs.shape[2] != self.in_dim:
            raise ValueError(
                f"shape mismatch: expected (batch, T, {self.in_dim}), got {xs.shape}")
        batch, steps, _ = xs.shape
        if steps == 0:
            raise ValueError("empty sequence: T must be >= 1")
        stacked = self._stacked_weights()
        caches = []
        state = self.zero_state(batch)
        for t in range(steps):
            state = self.step(state, xs[:, t, :], caches, stacked)
        self._cache = (xs.shape, caches, stacked)
        return state.hidden

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xs_shape, caches, (w_all, _) = self._require_cache(self._cache)
        batch, steps, _ = xs_shape
        if grad_out.shape != (batch, self.hidden_dim):
            raise ValueError(
                f"shape mismatch: grad {grad_out.shape} vs (batch, hidden)")
        g = self.params.grads
        hd = self.hidden_dim
        dxs = np.zeros(xs_shape)
        dw_all = np.zeros_like(w_all)
        db_all = np.zeros(4 * hd)
        dh = grad_out.copy()
        dc = np.zeros_like(dh)
        for t in range(steps - 1, -1, -1):
            cat, f, i, o, c_bar, c_prev, tanh_c = caches[t]
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
            dpre = np.concatenate([
                dc * c_prev * f * (1.0 - f),
                dc * c_bar * i * (1.0 - i),
                do * o * (1.0 - o),
                dc * i * (1.0 - c_bar * c_bar),
            ], axis=1)
            dw_all += cat.T @ dpre
            db_all += dpre.sum(axis=0)
            dcat = dpre @ w_all.T
            dh = dcat[:, :hd]
            dxs[:, t, :] = dcat[:, hd:]
            dc = dc * f
        for k, gate in enumerate(self.GATES):
            g[f"w_{gate}"] += dw_all[:, k * hd:(k + 1) * hd]
            g[f"b_{gate}"] += db_all[k * hd:(k + 1) * hd]
        return dxs
