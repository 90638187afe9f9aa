"""Binary cross-entropy loss, AdamW, and the mini-batch training loop.

One training run is strictly sequential and fully determined by
(model seed, train config, data): shuffling is a pure function of
(seed, epoch), the last partial batch is kept, and no class re-weighting is
applied so dataset imbalance reaches the model unmasked.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from kanids.layers import sigmoid
from kanids.report import Confusion, RunReport, accumulate, metrics


class DivergenceError(RuntimeError):
    """A loss, logit or gradient became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    epochs: int = 30
    batch_size: int = 256
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    prob_clamp: float = 1e-7

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 < self.prob_clamp < 0.5):
            raise ValueError(f"prob_clamp must be in (0, 0.5), got {self.prob_clamp}")


def bce_loss(probs: np.ndarray, labels: np.ndarray,
             clamp: float = 1e-7) -> float:
    """Mean binary cross-entropy over probabilities clamped away from 0/1."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if probs.shape != labels.shape:
        raise ValueError(
            f"length mismatch: {probs.shape} probs vs {labels.shape} labels")
    if probs.size == 0:
        raise ValueError("empty batch: need at least one sample")
    p = np.clip(probs, clamp, 1.0 - clamp)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)))


def bce_with_logits(logits: np.ndarray, labels: np.ndarray,
                    clamp: float = 1e-7) -> tuple[float, np.ndarray]:
    """Loss plus its gradient w.r.t. the logits in the fused form (p - y)/N."""
    flat = np.asarray(logits, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if flat.shape != labels.shape:
        raise ValueError(
            f"length mismatch: {flat.shape} logits vs {labels.shape} labels")
    if flat.size == 0:
        raise ValueError("empty batch: need at least one sample")
    p = sigmoid(flat)
    loss = bce_loss(p, labels, clamp)
    grad = ((p - labels) / flat.size).reshape(np.shape(logits))
    return loss, grad


class AdamW(object):
    """Adam with decoupled weight decay; zeroes gradients after each step."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.step_count = 0
        self._m: dict = {}
        self._v: dict = {}

    def step(self, param_sets) -> None:
        self.step_count += 1
        c = self.config
        bc1 = 1.0 - c.beta1 ** self.step_count
        bc2 = 1.0 - c.beta2 ** self.step_count
        for ps in param_sets:
            for name, theta in ps.entries.items():
                g = ps.grads[name]
                if not np.all(np.isfinite(g)):
                    raise DivergenceError(f"non-finite gradient in {name}")
                key = (id(ps), name)
                if key not in self._m:
                    self._m[key] = np.zeros_like(theta)
                    self._v[key] = np.zeros_like(theta)
                m, v = self._m[key], self._v[key]
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * g * g
                m_hat = m / bc1
                v_hat = v / bc2
                theta -= c.learning_rate * (m_hat / (np.sqrt(v_hat) + c.eps)) \
                    + c.learning_rate * c.weight_decay * theta
            ps.zero_grads()


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffling order for one epoch; pure in (seed, epoch, n)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def evaluate(model, features: np.ndarray, labels: np.ndarray,
             batch_size: int = 256) -> tuple[Confusion, dict[str, float]]:
    """Confusion counts and metrics of ``model`` on a preprocessed split."""
    conf = Confusion()
    for start in range(0, features.shape[0], batch_size):
        xb = features[start:start + batch_size]
        preds = model.predict(xb)
        conf = accumulate(conf, preds, labels[start:start + batch_size])
    return conf, metrics(conf)


def train_model(model, train_split, test_split, config: TrainConfig,
                notes: list[str] | None = None) -> RunReport:
    """Run the full shuffled mini-batch loop and evaluate on the test split.

    Raises ``DivergenceError`` if any loss, logit or gradient goes
    non-finite, and ``ValueError`` for an empty train split or a feature
    width that does not match the model input.
    """
    x_train, y_train = train_split.features, train_split.labels
    x_test, y_test = test_split.features, test_split.labels
    if x_train.shape[0] == 0:
        raise ValueError("empty batch: train split has no rows")
    if x_train.shape[1] != model.input_dim or x_test.shape[1] != model.input_dim:
        raise ValueError(
            f"schema mismatch: model expects {model.input_dim} features, "
            f"got train {x_train.shape[1]} / test {x_test.shape[1]}")

    started = time.perf_counter()
    opt = AdamW(config)
    param_sets = model.param_sets()
    epoch_losses = []
    n = x_train.shape[0]
    for epoch in range(config.epochs):
        order = epoch_permutation(config.seed, epoch, n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = model.forward(x_train[idx])
            if not np.all(np.isfinite(logits)):
                raise DivergenceError(f"non-finite logit at epoch {epoch}")
            loss, dlogits = bce_with_logits(logits, y_train[idx],
                                            config.prob_clamp)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            model.backward(dlogits)
            opt.step(param_sets)
            total += loss * len(idx)
        epoch_losses.append(total / n)

    conf, mets = evaluate(model, x_test, y_test, config.batch_size)
    return RunReport(
        model_name=model.name,
        dataset=train_split.name,
        config=asdict(config),
        param_count=model.param_count(),
        epoch_losses=epoch_losses,
        confusion=conf,
        metrics=mets,
        wall_time_s=time.perf_counter() - started,
        notes=list(notes or []),
    )
