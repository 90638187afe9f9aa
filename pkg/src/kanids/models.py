"""Benchmark architecture builders.

Eight model kinds share one contract: forward maps a (batch, input_dim)
feature matrix to a (batch, 1) logit, backward accumulates gradients for
every parameter, and construction is a pure function of the ModelSpec
(same spec + seed -> bit-identical initial parameters).

Models that want a 2-D view of the flat feature vector start with the
square reshape (zero-padded to the next perfect square); sequence models
treat each row of that square (or of the conv feature map) as one timestep.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from kanids.data import reshape_square_batch, square_side
from kanids.kan import ConvKan, KanLinear
from kanids.layers import Conv2d, Dense, Layer, Lstm, MaxPool2d, sigmoid
from kanids.splines import make_grid

MODEL_KINDS = ("cnn", "lstm", "mlp2", "mlp5", "kan2", "kan5", "convkan",
               "kan_lstm")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    hidden_width: int = 64
    cnn_channels: tuple[int, int, int] = (16, 32, 32)
    grid_size: int = 5
    degree: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(
                f"unsupported kind: {self.kind!r} (expected one of {MODEL_KINDS})")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")


class SquareReshape(Layer):
    """(batch, d) -> (batch, 1, S, S) with zero padding to the next square."""

    def __init__(self, input_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.side = square_side(input_dim)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"shape mismatch: expected (batch, {self.input_dim}), got {x.shape}")
        return reshape_square_batch(x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        b = grad_out.shape[0]
        return grad_out.reshape(b, self.side * self.side)[:, :self.input_dim]


class ChannelsToRows(Layer):
    """(batch, 1, S, S) -> (batch, S, S): drop the channel axis."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x[:, 0, :, :]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out[:, None, :, :]


class RowsAsSequence(Layer):
    """(batch, C, H, W) -> (batch, H, C*W): each image row is one timestep."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        self._shape = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, h, c * w)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        b, c, h, w = self._shape
        return np.ascontiguousarray(
            grad_out.reshape(b, h, c, w).transpose(0, 2, 1, 3))


class Flatten(Layer):
    """(batch, C, H, W) -> (batch, C*H*W)."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._shape)


class Model:
    """A layer chain with the uniform forward/backward/predict surface."""

    def __init__(self, spec: ModelSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        self.name = spec.kind
        self.kind = spec.kind
        self.input_dim = spec.input_dim

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict(self, x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        """Binary labels; probability exactly at the threshold counts as 1."""
        probs = sigmoid(self.forward(x).ravel())
        return (probs >= threshold).astype(np.int64)

    def param_sets(self):
        return [l.params for l in self.layers if l.params.entries]

    def param_count(self) -> int:
        return sum(l.param_count() for l in self.layers)

    def iter_named_params(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.entries.items():
                yield i, name, arr


def _pooled(side: int, times: int) -> int:
    for _ in range(times):
        side = -(-side // 2)
    return side


def build(spec: ModelSpec) -> Model:
    """Assemble the architecture named by ``spec.kind``."""
    rng = np.random.default_rng(spec.seed)
    w = spec.hidden_width
    c1, c2, c3 = spec.cnn_channels
    grid = make_grid(-1.0, 1.0, spec.grid_size, spec.degree)
    side = square_side(spec.input_dim)
    layers: list[Layer]

    if spec.kind in ("mlp2", "mlp5"):
        hidden = 2 if spec.kind == "mlp2" else 5
        dims = [spec.input_dim] + [w] * hidden
        layers = [Dense(dims[i], dims[i + 1], activation="relu", rng=rng)
                  for i in range(hidden)]
        layers.append(Dense(w, 1, activation="identity", rng=rng))

    elif spec.kind in ("kan2", "kan5"):
        depth = 2 if spec.kind == "kan2" else 5
        dims = [spec.input_dim] + [w] * (depth - 1) + [1]
        layers = [KanLinear(dims[i], dims[i + 1], grid, rng=rng)
                  for i in range(depth)]

    elif spec.kind == "cnn":
        layers = [SquareReshape(spec.input_dim)]
        chans = [1, c1, c2, c3]
        for i in range(3):
            layers.append(Conv2d(chans[i], chans[i + 1], kernel=3, pad=1,
                                 activation="relu", rng=rng))
            layers.append(MaxPool2d(2))
        flat = c3 * _pooled(side, 3) ** 2
        layers.append(Flatten())
        layers.append(Dense(flat, w, activation="relu", rng=rng))
        layers.append(Dense(w, 1, activation="identity", rng=rng))

    elif spec.kind == "lstm":
        layers = [
            SquareReshape(spec.input_dim),
            ChannelsToRows(),
            Lstm(side, w, rng=rng),
            Dense(w, 1, activation="identity", rng=rng),
        ]

    elif spec.kind == "convkan":
        layers = [SquareReshape(spec.input_dim)]
        chans = [1, c1, c2, c3]
        for i in range(3):
            layers.append(ConvKan(chans[i], chans[i + 1], kernel=3, pad=1,
                                  grid=grid, rng=rng))
            layers.append(MaxPool2d(2))
        flat = c3 * _pooled(side, 3) ** 2
        layers.append(Flatten())
        layers.append(KanLinear(flat, w, grid, rng=rng))
        layers.append(KanLinear(w, w, grid, rng=rng))
        layers.append(KanLinear(w, 1, grid, rng=rng))

    elif spec.kind == "kan_lstm":
        layers = [
            SquareReshape(spec.input_dim),
            Conv2d(1, c1, kernel=3, pad=1, activation="relu", rng=rng),
            Conv2d(c1, c2, kernel=3, pad=1, activation="relu", rng=rng),
            RowsAsSequence(),
            Lstm(c2 * side, w, rng=rng),
            KanLinear(w, w, grid, rng=rng),
            KanLinear(w, w, grid, rng=rng),
            Dense(w, 1, activation="identity", rng=rng),
        ]

    else:  # pragma: no cover - guarded by ModelSpec validation
        raise ValueError(f"unsupported kind: {spec.kind}")

    return Model(spec, layers)


MAGIC = b"KANIDSM1"


def save_model(model: Model, path) -> None:
    """Flat binary format: magic, JSON header line, float64 LE blob."""
    manifest = [[i, name, list(arr.shape)]
                for i, name, arr in model.iter_named_params()]
    header = {"spec": asdict(model.spec), "manifest": manifest}
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes()
                    for _, _, arr in model.iter_named_params())
    data = MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + blob
    Path(path).write_bytes(data)


def load_model(path) -> Model:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"not a model file: {path}")
    head_end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):head_end])
    spec_dict = dict(header["spec"])
    spec_dict["cnn_channels"] = tuple(spec_dict["cnn_channels"])
    model = build(ModelSpec(**spec_dict))
    blob = raw[head_end + 1:]
    offset = 0
    params = {(i, name): arr for i, name, arr in model.iter_named_params()}
    for i, name, shape in header["manifest"]:
        arr = params[(i, name)]
        if list(arr.shape) != shape:
            raise ValueError(f"manifest shape mismatch for layer {i} {name}")
        n = arr.size * 8
        arr[...] = np.frombuffer(blob[offset:offset + n],
                                 dtype="<f8").reshape(arr.shape)
        offset += n
    if offset != len(blob):
        raise ValueError("model file has trailing or missing parameter bytes")
    return model
