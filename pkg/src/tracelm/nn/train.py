"""Seeded training loop: Adam, shuffled batches, early stopping on validation loss.

Single-threaded execution with a fixed seed reproduces parameters exactly;
the per-epoch wall time is recorded for the overhead study.
"""

from __future__ import annotations

import os
import random
import sys
import time
from dataclasses import dataclass, asdict, field

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from .autograd import Tensor
from .base import Model
from .objectives import MaskPlan, eval_lm, eval_mlm, lm_loss, mask_batch, mlm_loss

LM = "lm"
MLM = "mlm"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    lr: float = 1e-3
    warmup_steps: int = 0
    clip_norm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.warmup_steps < 0 or self.clip_norm < 0:
            raise ConfigError("warmup_steps and clip_norm must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adaptive moment estimation over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr_scale: float = 1.0) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data -= (self.lr * lr_scale) * update.astype(p.data.dtype)


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_accuracy: float
    seconds: float


@dataclass
class TrainResult:
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_loss: float = float("inf")
    best_valid_accuracy: float = 0.0

    @property
    def epoch_seconds(self) -> list[float]:
        return [h.seconds for h in self.history]


def _default_log(message: str) -> None:
    if os.environ.get("TRACELM_VERBOSE"):
        print(message, file=sys.stderr, flush=True)


def train(
    model: Model,
    train_records: np.ndarray,
    valid_records: np.ndarray,
    objective: str,
    cfg: TrainConfig,
    plan: MaskPlan | None = None,
    eval_fn=None,
    log=_default_log,
) -> TrainResult:
    """Optimize model in place; returns history with best-validation weights restored.

    eval_fn(model, records) -> (loss, accuracy) may be injected for testing;
    the default evaluates the active objective (MLM evaluation re-masks with
    the epoch-0 seeds so validation losses are comparable across epochs).
    """
    if len(train_records) == 0 or len(valid_records) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if objective not in (LM, MLM):
        raise ConfigError(f"unknown objective {objective!r}")
    if objective == MLM and plan is None:
        plan = MaskPlan()

    if eval_fn is None:
        if objective == LM:
            eval_fn = lambda m, recs: eval_lm(m, recs, batch_size=cfg.batch_size)
        else:
            eval_fn = lambda m, recs: eval_mlm(m, recs, plan, batch_size=cfg.batch_size)

    opt = Adam(model.parameters(), lr=cfg.lr)
    result = TrainResult()
    best_state: dict[str, np.ndarray] | None = None
    since_best = 0
    step = 0

    for epoch in range(1, cfg.max_epochs + 1):
        t_start = time.perf_counter()
        order = list(range(len(train_records)))
        random.Random(cfg.seed * 10_007 + epoch).shuffle(order)
        loss_sum = 0.0
        loss_n = 0
        for at in range(0, len(order), cfg.batch_size):
            batch = train_records[order[at : at + cfg.batch_size]]
            try:
                if objective == LM:
                    loss, n_pred = lm_loss(model, batch, training=True)
                else:
                    masked = mask_batch(batch, plan, model.sys_vocab_size, epoch=epoch, base_index=at)
                    loss, n_pred = mlm_loss(model, masked, training=True)
            except FloatingPointError as exc:
                raise TrainingDivergedError(epoch, str(exc)) from None
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(epoch, f"batch at {at}")
            opt.zero_grad()
            loss.backward()
            if cfg.clip_norm > 0:
                clip_gradients(model.parameters(), cfg.clip_norm)
            step += 1
            lr_scale = min(1.0, step / cfg.warmup_steps) if cfg.warmup_steps else 1.0
            opt.step(lr_scale)
            loss_sum += loss_value * n_pred
            loss_n += n_pred
        valid_loss, valid_acc = eval_fn(model, valid_records)
        if not np.isfinite(valid_loss):
            raise TrainingDivergedError(epoch, "validation loss")
        seconds = time.perf_counter() - t_start
        result.history.append(
            EpochStats(epoch, loss_sum / max(loss_n, 1), valid_loss, valid_acc, seconds)
        )
        log(
            f"epoch {epoch}: train {loss_sum / max(loss_n, 1):.4f} "
            f"valid {valid_loss:.4f} acc {valid_acc:.2f}% ({seconds:.1f}s)"
        )
        if valid_loss < result.best_valid_loss:
            result.best_valid_loss = valid_loss
            result.best_valid_accuracy = valid_acc
            result.best_epoch = epoch
            best_state = model.state_arrays()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    if best_state is not None:
        model.load_state(best_state)
    return result
