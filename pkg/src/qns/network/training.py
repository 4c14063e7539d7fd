"""Mini-batch training loop: Adam moments under a one-cycle learning
rate envelope, early stopping on validation loss, best-checkpoint
selection."""

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DivergenceError, ValidationError
from ..validation import require
from .core import NetworkParameters, backward_batch, forward_batch, mape_loss


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 150
    batch_size: int = 32
    max_lr: float = 2e-2
    warmup_frac: float = 0.3
    patience: int = 40
    seed: int = 0
    div_factor: float = 25.0
    final_div: float = 1e4
    clip_norm: float | None = 1.0

    def __post_init__(self):
        require(self.epochs >= 1 and self.batch_size >= 1, "counts must be positive")
        require(self.max_lr > 0, "max_lr must be positive")
        require(0.0 < self.warmup_frac < 1.0, "warmup_frac must lie in (0, 1)")
        require(self.patience >= 1, "patience must be >= 1")
        require(self.clip_norm is None or self.clip_norm > 0, "clip_norm must be positive")


def one_cycle_lr(step: int, total_steps: int, config: TrainingConfig) -> float:
    """Linear warmup to max_lr, cosine decay after."""
    progress = step / max(total_steps - 1, 1)
    lr0 = config.max_lr / config.div_factor
    lr_min = config.max_lr / config.final_div
    if progress <= config.warmup_frac:
        frac = progress / config.warmup_frac
        return lr0 + (config.max_lr - lr0) * frac
    frac = (progress - config.warmup_frac) / (1.0 - config.warmup_frac)
    return lr_min + (config.max_lr - lr_min) * 0.5 * (1.0 + math.cos(math.pi * frac))


class _Adam:
    def __init__(self, params: NetworkParameters, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(getattr(params, k)) for k in ("w_gates", "b_gates", "w_out", "b_out")}
        self.v = {k: np.zeros_like(v) for k, v in self.m.items()}

    def step(self, params: NetworkParameters, grads: dict, lr: float):
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            getattr(params, key)[...] -= lr * update


def evaluate_mape(params: NetworkParameters, x: np.ndarray, y: np.ndarray, chunk: int = 512) -> float:
    """Dataset-mean MAPE evaluated in chunks."""
    losses = []
    for start in range(0, x.shape[0], chunk):
        pred = forward_batch(params, x[start : start + chunk])
        losses.append(mape_loss(pred, y[start : start + chunk]) * (pred.shape[0]))
    return float(sum(losses) / x.shape[0])


def train_network(
    params: NetworkParameters,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    config: TrainingConfig,
):
    """Optimize ``params`` in place-copy; returns (best_params, history).

    History has one entry per epoch with the running train MAPE, the
    validation MAPE, and the last learning rate; the returned parameters
    are those of the best validation epoch.  Divergence aborts with the
    partial history attached to the raised error.
    """
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    x_val = np.asarray(x_val, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    require(x_train.shape[0] == y_train.shape[0], "train inputs/targets length mismatch")
    require(x_val.shape[0] == y_val.shape[0], "val inputs/targets length mismatch")
    require(x_train.shape[0] >= 1 and x_val.shape[0] >= 1, "empty split")

    params = params.copy()
    n = x_train.shape[0]
    rng = np.random.default_rng(config.seed)
    batches_per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * batches_per_epoch
    adam = _Adam(params)
    history = []
    best_val = math.inf
    best_params = params.copy()
    best_epoch = -1
    step = 0
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            running = 0.0
            seen = 0
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                lr = one_cycle_lr(step, total_steps, config)
                loss, grads = backward_batch(params, x_train[idx], y_train[idx])
                if config.clip_norm is not None:
                    norm = math.sqrt(
                        sum(float(np.sum(g * g)) for g in grads.values())
                    )
                    if norm > config.clip_norm:
                        scale = config.clip_norm / norm
                        for g in grads.values():
                            g *= scale
                adam.step(params, grads, lr)
                running += loss * idx.size
                seen += idx.size
                step += 1
            val = evaluate_mape(params, x_val, y_val)
            if not math.isfinite(val):
                raise DivergenceError(f"validation loss diverged at epoch {epoch}")
            history.append(
                {
                    "epoch": epoch,
                    "train_mape": running / seen,
                    "val_mape": val,
                    "lr": one_cycle_lr(step - 1, total_steps, config),
                }
            )
            if val < best_val:
                best_val = val
                best_params = params.copy()
                best_epoch = epoch
            elif epoch - best_epoch >= config.patience:
                break
    except DivergenceError as exc:
        exc.history = history
        raise
    return best_params, history


def fine_tune(
    params: NetworkParameters,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    config: TrainingConfig,
):
    """Short adaptation run at a tenth of the configured peak rate."""
    reduced = replace(config, max_lr=config.max_lr / 10.0)
    return train_network(params, x_train, y_train, x_val, y_val, reduced)
