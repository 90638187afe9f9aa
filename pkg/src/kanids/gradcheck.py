"""Central finite-difference verification of every layer's backward pass.

Each scenario builds a small randomly-initialized layer, projects its output
to a scalar with a fixed random weighting, and compares the analytic
gradients (parameters and input) against central differences.  Relative
error uses max(|a|, |b|, 1e-8) as the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from kanids.kan import ConvKan, KanLinear
from kanids.layers import Conv2d, Dense, Layer, Lstm, MaxPool2d
from kanids.splines import make_grid

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-4


def numeric_grad(loss_fn: Callable[[], float], arr: np.ndarray,
                 h: float = DEFAULT_H) -> np.ndarray:
    """Central finite differences of ``loss_fn`` w.r.t. each entry of ``arr``.

    ``arr`` is perturbed in place and restored, so it must be the same array
    object the loss reads from.
    """
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        fp = loss_fn()
        arr[idx] = old - h
        fm = loss_fn()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


ABS_NOISE_FLOOR = 1e-9


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst relative disagreement, max(|a|, |b|, 1e-8) in the denominator.

    Differences below ``ABS_NOISE_FLOOR`` count as exact: central differences
    of an O(1) loss carry ~1e-11 of float64 roundoff, which would otherwise
    dominate the ratio for gradient components that are genuinely near zero.
    """
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.where(diff < ABS_NOISE_FLOOR, 0.0, diff / denom)
    return float(np.max(rel))


@dataclass
class CheckResult:
    name: str
    seed: int
    max_rel_err: float
    tolerance: float = DEFAULT_TOL

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def check_layer(layer: Layer, x: np.ndarray, seed: int,
                corrupt: str | None = None) -> float:
    """Max relative error over all parameter gradients and the input gradient.

    ``corrupt`` names a parameter whose analytic gradient is deliberately
    perturbed (test hook for verifying the check itself can fail).
    """
    rng = np.random.default_rng(seed + 977)
    proj = rng.normal(size=layer.forward(x).shape)

    def loss() -> float:
        return float(np.sum(layer.forward(x) * proj))

    layer.params.zero_grads()
    out = layer.forward(x)
    dx = layer.backward(proj.reshape(out.shape) if proj.shape != out.shape else proj)
    analytic = {name: g.copy() for name, g in layer.params.grads.items()}
    if corrupt is not None:
        analytic[corrupt] += 1e-2

    worst = max_rel_err(dx, numeric_grad(loss, x))
    for name, arr in layer.params.entries.items():
        worst = max(worst, max_rel_err(analytic[name], numeric_grad(loss, arr)))
    return worst


def _dense_scenario(seed: int):
    rng = np.random.default_rng(seed)
    activation = ("tanh", "sigmoid", "identity", "relu")[seed % 4]
    for attempt in range(50):
        layer = Dense(4, 3, activation=activation,
                      rng=np.random.default_rng(seed * 31 + attempt))
        x = rng.normal(size=(3, 4))
        if activation != "relu":
            return layer, x
        pre = x @ layer.w + layer.b
        # keep relu pre-activations away from the kink so FD stays valid
        if np.min(np.abs(pre)) > 1e-2:
            return layer, x
        x = rng.normal(size=(3, 4))
    raise RuntimeError("could not find a relu-safe dense configuration")


def _conv2d_scenario(seed: int):
    rng = np.random.default_rng(seed)
    layer = Conv2d(2, 3, kernel=2, pad=seed % 2, activation="tanh",
                   rng=np.random.default_rng(seed * 31))
    x = rng.normal(size=(2, 2, 4, 4))
    return layer, x


def _maxpool_scenario(seed: int):
    rng = np.random.default_rng(seed)
    layer = MaxPool2d(2)
    for _ in range(50):
        x = rng.normal(size=(2, 2, 4, 5))  # 5 exercises the -inf padding path
        tiles_ok = True
        xp = np.full((2, 2, 4, 6), -np.inf)
        xp[:, :, :, :5] = x
        for n in np.ndindex(2, 2, 2, 3):
            b, c, i, j = n
            win = xp[b, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].ravel()
            finite = np.sort(win[np.isfinite(win)])[::-1]
            if len(finite) > 1 and finite[0] - finite[1] < 1e-3:
                tiles_ok = False
                break
        if tiles_ok:
            return layer, x
    raise RuntimeError("could not find a tie-free maxpool configuration")


def _lstm_scenario(seed: int):
    rng = np.random.default_rng(seed)
    layer = Lstm(2, 3, rng=np.random.default_rng(seed * 31))
    x = rng.normal(size=(2, 3, 2))  # T = 3
    return layer, x


def _kan_linear_scenario(seed: int):
    rng = np.random.default_rng(seed)
    layer = KanLinear(3, 2, make_grid(-1, 1, 4, 3),
                      rng=np.random.default_rng(seed * 31))
    x = rng.uniform(-0.9, 0.9, size=(3, 3))
    return layer, x


def _kan_linear_deg0_scenario(seed: int):
    rng = np.random.default_rng(seed)
    grid = make_grid(-1, 1, 5, 0)
    layer = KanLinear(2, 2, grid, rng=np.random.default_rng(seed * 31))
    for _ in range(50):
        x = rng.uniform(-0.9, 0.9, size=(2, 2))
        # piecewise-constant basis: keep FD windows clear of the knots
        if np.min(np.abs(x[..., None] - grid.knots)) > 1e-3:
            return layer, x
    raise RuntimeError("could not find knot-free degree-0 inputs")


def _conv_kan_scenario(seed: int):
    rng = np.random.default_rng(seed)
    layer = ConvKan(2, 2, kernel=2, pad=0, grid=make_grid(-1, 1, 3, 3),
                    rng=np.random.default_rng(seed * 31))
    x = rng.uniform(-0.9, 0.9, size=(2, 2, 3, 3))
    return layer, x


SCENARIOS = {
    "dense": _dense_scenario,
    "conv2d": _conv2d_scenario,
    "maxpool": _maxpool_scenario,
    "lstm": _lstm_scenario,
    "kan_linear": _kan_linear_scenario,
    "kan_linear_deg0": _kan_linear_deg0_scenario,
    "conv_kan": _conv_kan_scenario,
}


def run_suite(seeds: int = 20, tolerance: float = DEFAULT_TOL,
              corrupt: dict[str, str] | None = None) -> list[CheckResult]:
    """Run every scenario over ``seeds`` random configurations.

    Returns one result per (scenario, seed); ``corrupt`` maps scenario name
    to the parameter whose analytic gradient should be falsified.
    """
    corrupt = corrupt or {}
    results = []
    for name, build in SCENARIOS.items():
        for seed in range(seeds):
            layer, x = build(seed)
            err = check_layer(layer, x, seed, corrupt.get(name))
            results.append(CheckResult(name, seed, err, tolerance))
    return results


def summarize(results: list[CheckResult]) -> dict[str, float]:
    """Worst relative error per scenario name."""
    worst: dict[str, float] = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.max_rel_err)
    return worst
