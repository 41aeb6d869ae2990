"""Cross-entropy loss, Adam and the early-stopping training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EmptySplit, LabelOutOfRange
from .network import ModelSpec, forward, backward, init_params, zeros_like_params

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 15
    patience: int = 8
    dropout: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [0, max_epochs]")

    def to_dict(self) -> dict:
        return asdict(self)


def loss_ce(probabilities, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient with respect to the logits."""
    p = np.asarray(probabilities)
    y = np.asarray(labels, dtype=np.int64)
    n, k = p.shape
    if y.shape != (n,):
        raise LabelOutOfRange(f"expected {n} labels, got shape {y.shape}")
    if n and (y.min() < 0 or y.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    picked = p[np.arange(n), y]
    loss = float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))
    grad = p.copy()
    grad[np.arange(n), y] -= 1
    return loss, grad / n


@dataclass
class AdamState:
    m: dict
    v: dict

    @classmethod
    def fresh(cls, params) -> AdamState:
        return cls(zeros_like_params(params), zeros_like_params(params))


def adam_step(params, grads, state: AdamState, t: int, config: TrainConfig):
    """One bias-corrected Adam update. Returns new params and state; inputs are left alone."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        new_params[name], new_m[name], new_v[name] = {}, {}, {}
        for key, w in p.items():
            g = grads[name][key]
            m = b1 * state.m[name][key] + (1 - b1) * g
            v = b2 * state.v[name][key] + (1 - b2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
            new_params[name][key] = (w - update).astype(w.dtype)
            new_m[name][key] = m.astype(w.dtype)
            new_v[name][key] = v.astype(w.dtype)
    return new_params, AdamState(new_m, new_v)


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a strict val-loss improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when this epoch is a new best."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.wait = 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainResult:
    params: dict
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def evaluate_loss(spec: ModelSpec, params, x, y, batch_size: int = 64) -> tuple[float, float]:
    """Eval-mode mean loss and accuracy over a dataset."""
    total, correct = 0.0, 0
    for start in range(0, len(x), batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        res = forward(spec, params, xb, train_mode=False)
        loss, _ = loss_ce(res.probabilities, yb)
        total += loss * len(xb)
        correct += int((res.probabilities.argmax(axis=1) == yb).sum())
    return total / len(x), correct / len(x)


def train(spec: ModelSpec, train_data, val_data, config: TrainConfig, params=None,
          dtype=np.float32) -> TrainResult:
    """Mini-batch Adam training with early stopping on validation loss.

    ``train_data`` and ``val_data`` are ``(x, y)`` pairs with ``x`` shaped
    ``(N, C, H, W)``. Augmentation, if any, has already been applied to the
    training pair. Returns the parameters from the best validation epoch.
    """
    x_tr, y_tr = np.asarray(train_data[0], dtype=dtype), np.asarray(train_data[1], dtype=np.int64)
    x_va, y_va = np.asarray(val_data[0], dtype=dtype), np.asarray(val_data[1], dtype=np.int64)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise EmptySplit("training and validation sets must be non-empty")
    if params is None:
        params = init_params(spec, seed=config.seed, dtype=dtype)
    rng = np.random.default_rng([config.seed, 1])
    state = AdamState.fresh(params)
    stopper = EarlyStopping(config.patience)
    best_params = params
    history = []
    step = 0
    n = len(x_tr)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        seeds = rng.integers(0, 2**63 - 1, size=(n + config.batch_size - 1) // config.batch_size)
        run_loss, run_correct = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            res = forward(spec, params, x_tr[idx], train_mode=True, seed=int(seeds[b]))
            loss, dlogits = loss_ce(res.probabilities, y_tr[idx])
            grads = backward(spec, params, res.cache, dlogits.astype(dtype))
            step += 1
            params, state = adam_step(params, grads, state, step, config)
            run_loss += loss * len(idx)
            run_correct += int((res.probabilities.argmax(axis=1) == y_tr[idx]).sum())
        val_loss, val_acc = evaluate_loss(spec, params, x_va, y_va)
        rec = EpochRecord(epoch, run_loss / n, val_loss, run_correct / n, val_acc)
        history.append(rec)
        log.info("epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.3f", epoch, rec.train_loss, val_loss, val_acc)
        if stopper.update(epoch, val_loss):
            best_params = params
        if stopper.should_stop:
            log.info("early stop after epoch %d (best %d)", epoch, stopper.best_epoch)
            break
    return TrainResult(best_params, history, stopper.best_epoch)
