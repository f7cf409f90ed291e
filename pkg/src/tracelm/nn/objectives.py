"""LM and MLM objectives: masking procedure, losses, evaluation, scoring.

LM: the output at position t is the distribution of the sysname at t+1, so a
window of T events yields T-1 scored predictions (the unconditioned first
event is never scored). MLM: a fixed fraction of positions is selected; of
those, most are fully masked (MASK id, argument channels zeroed), some get a
random sysname with unchanged arguments, the rest are left intact.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, UnsupportedModelError
from ..events import MASK_ID, RESERVED_TOKENS
from .autograd import Tensor, cross_entropy, gather_rows, log_softmax, softmax
from .base import LSTM, TRANSFORMER, Model

_N_RESERVED = len(RESERVED_TOKENS)


@dataclass(frozen=True)
class MaskPlan:
    """Selection and corruption fractions for MLM pretraining."""

    p_select: float = 0.25
    frac_mask: float = 0.8
    frac_random: float = 0.1
    frac_keep: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p_select < 1.0:
            raise ConfigError(f"p_select must be in (0, 1), got {self.p_select}")
        for name in ("frac_mask", "frac_random", "frac_keep"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        total = self.frac_mask + self.frac_random + self.frac_keep
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"mask fractions must sum to 1, got {total}")

    def counts(self, length: int) -> tuple[int, int, int, int]:
        """(selected, masked, random, kept); selected = ceil(p_select * length),
        masked/random floor their fractions, kept takes the remainder."""
        k = math.ceil(self.p_select * length)
        n_mask = int(self.frac_mask * k)
        n_rand = int(self.frac_random * k)
        return k, n_mask, n_rand, k - n_mask - n_rand

    def with_seed(self, seed: int) -> "MaskPlan":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class MaskedBatch:
    """Masked model input plus the prediction targets."""

    records: np.ndarray     # (B, T) corrupted copy
    zero_args: np.ndarray   # (B, T) bool, True where argument channels are zeroed
    positions: np.ndarray   # (B, k) selected positions, ascending
    labels: np.ndarray      # (B, k) original sysname ids at those positions


def mlm_mask(records: np.ndarray, plan: MaskPlan, sys_vocab_size: int) -> MaskedBatch:
    """Apply the masking procedure to one (T,) window, seeded by plan.seed.

    Random replacements draw uniformly from the non-reserved sysname ids and
    keep every argument field unchanged.
    """
    if records.ndim != 1:
        raise ValueError("mlm_mask masks one window; use mask_batch for batches")
    if sys_vocab_size <= _N_RESERVED:
        raise ValueError("vocabulary holds no non-reserved sysnames")
    seq_len = len(records)
    k, n_mask, n_rand, _ = plan.counts(seq_len)
    rng = random.Random(plan.seed)
    chosen = rng.sample(range(seq_len), k)

    out = records.copy()
    zero_args = np.zeros(seq_len, dtype=bool)
    for j, pos in enumerate(chosen):
        if j < n_mask:
            out["sysname_id"][pos] = MASK_ID
            zero_args[pos] = True
        elif j < n_mask + n_rand:
            out["sysname_id"][pos] = rng.randrange(_N_RESERVED, sys_vocab_size)
        # else: kept unchanged, still predicted
    positions = np.sort(np.asarray(chosen, dtype=np.int64))
    labels = records["sysname_id"][positions].astype(np.int64)
    return MaskedBatch(
        records=out[None, :], zero_args=zero_args[None, :],
        positions=positions[None, :], labels=labels[None, :],
    )


def _derive_seed(seed: int, epoch: int, index: int) -> int:
    return (seed * 1_000_003 + epoch * 8_191 + index) % (2**63)


def mask_batch(
    records: np.ndarray, plan: MaskPlan, sys_vocab_size: int, *, epoch: int = 0, base_index: int = 0
) -> MaskedBatch:
    """Mask a (B, T) batch; window i uses a seed derived from (plan.seed, epoch, base_index+i)."""
    parts = [
        mlm_mask(records[i], plan.with_seed(_derive_seed(plan.seed, epoch, base_index + i)), sys_vocab_size)
        for i in range(records.shape[0])
    ]
    return MaskedBatch(
        records=np.concatenate([p.records for p in parts]),
        zero_args=np.concatenate([p.zero_args for p in parts]),
        positions=np.concatenate([p.positions for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
    )


def lm_logits(model: Model, records: np.ndarray, *, training: bool = False) -> Tensor:
    """Left-to-right logits for either model kind (causal mask for the Transformer)."""
    if model.kind == LSTM:
        return model.forward(records, training=training)
    return model.forward(records, causal=True, training=training)


def lm_forward(model: Model, records: np.ndarray) -> np.ndarray:
    """Per-position next-sysname probabilities, shape (B, T, V); rows sum to 1."""
    return softmax(lm_logits(model, records), axis=-1).data


def lm_loss(model: Model, records: np.ndarray, *, training: bool = True) -> tuple[Tensor, int]:
    """Mean cross-entropy of predicting sysname t+1 from events <= t."""
    if records.ndim == 1:
        records = records[None, :]
    logits = lm_logits(model, records, training=training)
    batch, seq_len, vocab = logits.shape
    pred = logits[:, : seq_len - 1, :].reshape(batch * (seq_len - 1), vocab)
    targets = records["sysname_id"][:, 1:].astype(np.int64).reshape(-1)
    return cross_entropy(pred, targets), targets.size


def mlm_loss(model: Model, masked: MaskedBatch, *, training: bool = True) -> tuple[Tensor, int]:
    """Mean cross-entropy over the selected positions only."""
    if model.kind != TRANSFORMER:
        raise UnsupportedModelError("the MLM objective requires the Transformer")
    if masked.positions.size == 0:
        raise ValueError("no positions selected: MLM loss is undefined")
    logits = model.forward(masked.records, causal=False, zero_args=masked.zero_args, training=training)
    batch, seq_len, vocab = logits.shape
    flat = logits.reshape(batch * seq_len, vocab)
    flat_idx = (np.arange(batch)[:, None] * seq_len + masked.positions).reshape(-1)
    picked = gather_rows(flat, flat_idx)
    return cross_entropy(picked, masked.labels.reshape(-1)), masked.labels.size


def mlm_forward(model: Model, masked: MaskedBatch) -> tuple[np.ndarray, float]:
    """

    Probabilities at the selected positions, shape (B, k, V), plus the mean
    cross-entropy of the original sysnames under them.
    """
    loss, _ = mlm_loss(model, masked, training=False)
    logits = model.forward(masked.records, causal=False, zero_args=masked.zero_args, training=False)
    batch, seq_len, vocab = logits.shape
    probs = softmax(logits, axis=-1).data
    rows = np.arange(batch)[:, None]
    return probs[rows, masked.positions], float(loss.data)


def score(model: Model, records: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Chain-rule log-likelihood of each window: sum_t log p(sys_t | events_<t).

    Returns a float array of shape (N,); more negative means more anomalous.
    """
    if records.ndim == 1:
        records = records[None, :]
    out = np.empty(len(records), dtype=np.float64)
    for at in range(0, len(records), batch_size):
        chunk = records[at : at + batch_size]
        logits = lm_logits(model, chunk, training=False)
        logp = log_softmax(logits, axis=-1).data.astype(np.float64)
        targets = chunk["sysname_id"][:, 1:].astype(np.int64)
        rows = np.arange(len(chunk))[:, None]
        cols = np.arange(targets.shape[1])[None, :]
        out[at : at + len(chunk)] = logp[rows, cols, targets].sum(axis=1)
    return out


def eval_lm(model: Model, records: np.ndarray, batch_size: int = 64) -> tuple[float, float]:
    """(mean cross-entropy in nats, top-1 accuracy in percent) over next-sysname
    predictions; position 0 of each window is never a target."""
    total_nll = 0.0
    total_hits = 0
    total = 0
    for at in range(0, len(records), batch_size):
        chunk = records[at : at + batch_size]
        logits = lm_logits(model, chunk, training=False)
        logp = log_softmax(logits, axis=-1).data.astype(np.float64)
        targets = chunk["sysname_id"][:, 1:].astype(np.int64)
        rows = np.arange(len(chunk))[:, None]
        cols = np.arange(targets.shape[1])[None, :]
        total_nll -= logp[rows, cols, targets].sum()
        total_hits += int((logp[:, :-1, :].argmax(axis=-1) == targets).sum())
        total += targets.size
    return total_nll / total, 100.0 * total_hits / total


def eval_mlm(
    model: Model, records: np.ndarray, plan: MaskPlan, batch_size: int = 64
) -> tuple[float, float]:
    """MLM cross-entropy/accuracy under a fixed (epoch-0) masking of records."""
    total_nll = 0.0
    total_hits = 0
    total = 0
    for at in range(0, len(records), batch_size):
        chunk = records[at : at + batch_size]
        masked = mask_batch(chunk, plan, model.sys_vocab_size, epoch=0, base_index=at)
        logits = model.forward(masked.records, causal=False, zero_args=masked.zero_args, training=False)
        logp = log_softmax(logits, axis=-1).data.astype(np.float64)
        rows = np.arange(len(chunk))[:, None]
        sel = logp[rows, masked.positions]           # (B, k, V)
        total_nll -= np.take_along_axis(sel, masked.labels[:, :, None], axis=-1).sum()
        total_hits += int((sel.argmax(axis=-1) == masked.labels).sum())
        total += masked.labels.size
    return total_nll / total, 100.0 * total_hits / total
