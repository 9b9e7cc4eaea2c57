"""Loss, Adam with warmup schedule, and the early-stopping epoch loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, UsageError, backward
from .model import ModelConfig, check_params, forward, predict
from .tensor import DimensionError

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "step", "lr", "train_mse", "val_mse", "best")


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 300
    patience: int = 20
    batch_size: int = 96
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    d_model: int | None = None  # None: use the model's d_k
    fixed_lr: float | None = None  # bypasses the schedule when set
    seed: int = 0

    def __post_init__(self):
        for name in ("max_epochs", "patience", "batch_size", "warmup_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.d_model is not None and self.d_model < 1:
            raise ValueError("d_model must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "OptimizerState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise DimensionError(f"lengths differ: {pred.size} vs {target.size}")
    if pred.size == 0:
        raise DimensionError("mse_loss of empty vectors")
    r = target - pred
    return float((r * r).sum() / r.size)


def lr_schedule(step: int, cfg: TrainConfig, d_model: int) -> float:
    """``d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)``."""
    if step < 1:
        raise UsageError(f"learning-rate schedule is defined for step >= 1, got {step}")
    if cfg.fixed_lr is not None:
        return cfg.fixed_lr
    d = cfg.d_model if cfg.d_model is not None else d_model
    return d ** -0.5 * min(step ** -0.5, step * cfg.warmup_steps ** -1.5)


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float,
              cfg: TrainConfig = TrainConfig()):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    step = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise DimensionError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, OptimizerState(new_m, new_v, step)


def loss_and_grads(params: dict, X: np.ndarray, y: np.ndarray, cfg: ModelConfig):
    """MSE of the model on one batch and its gradient for every parameter."""
    tape = Tape()
    watched = tape.watch_all(params)
    pred, _ = forward(X, watched, cfg)
    loss = ad.mse_loss(pred, np.asarray(y, dtype=np.float64).reshape(pred.shape))
    return float(loss.value), backward(tape, loss)


def evaluate_mse(params: dict, X: np.ndarray, y: np.ndarray, cfg: ModelConfig) -> float:
    pred = predict(X, params, cfg)
    return mse_loss(pred, np.asarray(y).reshape(pred.shape))


class EarlyStopping:
    """Tracks the best validation loss; stops after ``patience`` epochs without
    strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; returns True if it is a new best."""
        if loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = math.inf
    stopped_early: bool = False


def _format_row(row: dict) -> list[str]:
    return [
        str(row["epoch"]), str(row["step"]), repr(row["lr"]),
        repr(row["train_mse"]), repr(row["val_mse"]), str(int(row["best"])),
    ]


def train(params: dict, model_cfg: ModelConfig, train_data, val_data,
          cfg: TrainConfig = TrainConfig(), log_path: str | Path | None = None) -> TrainResult:
    """Mini-batch Adam training with early stopping on validation MSE.

    ``train_data`` and ``val_data`` are ``(X, y)`` pairs (or objects with ``X``
    and ``y`` attributes).  The returned parameters are those of the epoch with
    the lowest validation MSE.  When ``log_path`` is given a CSV log is written
    row by row.
    """
    Xtr, ytr = _unpack(train_data)
    Xva, yva = _unpack(val_data)
    if len(Xtr) == 0 or len(Xva) == 0:
        raise UsageError("train and validation splits must be non-empty")
    check_params(params, model_cfg)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState.zeros_like(params)
    stopper = EarlyStopping(cfg.patience)
    result = TrainResult(params=params)
    n = len(Xtr)

    fh = writer = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n)
            total = 0.0
            lr = 0.0
            for b, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                loss, grads = loss_and_grads(params, Xtr[idx], ytr[idx], model_cfg)
                if not math.isfinite(loss):
                    raise TrainingError(epoch, b, loss)
                lr = lr_schedule(state.step + 1, cfg, model_cfg.d_k)
                params, state = adam_step(params, grads, state, lr, cfg)
                total += loss * len(idx)
            val = evaluate_mse(params, Xva, yva, model_cfg)
            if not math.isfinite(val):
                raise TrainingError(epoch, -1, val)
            improved = stopper.update(epoch, val)
            if improved:
                result.params = params
                result.best_epoch, result.best_val_mse = epoch, val
            row = dict(epoch=epoch, step=state.step, lr=lr, train_mse=total / n,
                       val_mse=val, best=improved)
            result.log.append(row)
            if writer is not None:
                writer.writerow(_format_row(row))
                fh.flush()
            log.info("epoch %d train %.6g val %.6g%s", epoch, row["train_mse"], val,
                     " *" if improved else "")
            if stopper.should_stop:
                result.stopped_early = True
                break
    finally:
        if fh is not None:
            fh.close()
    return result


def _unpack(data):
    if hasattr(data, "X"):
        return np.asarray(data.X, dtype=np.float64), np.asarray(data.y, dtype=np.float64)
    X, y = data
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)
