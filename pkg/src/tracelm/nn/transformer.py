"""Post-norm Transformer encoder over event vectors.

One network serves both objectives: a causal attention mask makes it a
left-to-right LM, no mask makes it the bidirectional MLM encoder. The
position channel is concatenated to the event vector (not added) before the
input projection; the feedforward nonlinearity is tanh so every primitive
stays smooth for finite-difference verification.
"""

from __future__ import annotations

import numpy as np

from ..represent import RepresentationConfig
from .autograd import Tensor, concat, dropout, layer_norm, matmul, softmax, tanh, transpose
from .base import TRANSFORMER, Model, ModelConfig
from .inputs import EventRepresenter, position_channel

_MASK_OFF = -1e9


class TransformerModel(Model):
    kind = TRANSFORMER

    def __init__(
        self,
        model_cfg: ModelConfig,
        rep_cfg: RepresentationConfig,
        sys_vocab_size: int,
        proc_vocab_size: int,
        seed: int = 0,
        dtype=np.float32,
    ):
        super().__init__(dtype)
        if model_cfg.kind != TRANSFORMER:
            raise ValueError(f"TransformerModel built with kind {model_cfg.kind!r}")
        self.model_cfg = model_cfg
        self.rep_cfg = rep_cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.rep = EventRepresenter(self, rep_cfg, sys_vocab_size, proc_vocab_size, rng)
        self._dropout_rng = np.random.default_rng(seed + 0x5EED)

        self.input_dim = rep_cfg.total_dim + model_cfg.d_position
        self.width = model_cfg.resolve_width(self.input_dim)
        if self.input_dim != self.width:
            self._param("in_proj.W", self._linear_init(rng, self.input_dim, self.width))
            self._param("in_proj.b", np.zeros(self.width))
        w = self.width
        for layer in range(model_cfg.tf_layers):
            for mat in ("Wq", "Wk", "Wv", "Wo"):
                self._param(f"tf.{layer}.attn.{mat}", self._linear_init(rng, w, w))
                self._param(f"tf.{layer}.attn.{mat.replace('W', 'b')}", np.zeros(w))
            self._param(f"tf.{layer}.ln1.g", np.ones(w))
            self._param(f"tf.{layer}.ln1.b", np.zeros(w))
            self._param(f"tf.{layer}.ff.W1", self._linear_init(rng, w, model_cfg.tf_ff))
            self._param(f"tf.{layer}.ff.b1", np.zeros(model_cfg.tf_ff))
            self._param(f"tf.{layer}.ff.W2", self._linear_init(rng, model_cfg.tf_ff, w))
            self._param(f"tf.{layer}.ff.b2", np.zeros(w))
            self._param(f"tf.{layer}.ln2.g", np.ones(w))
            self._param(f"tf.{layer}.ln2.b", np.zeros(w))
        self._param("head.W", self._linear_init(rng, w, sys_vocab_size))
        self._param("head.b", np.zeros(sys_vocab_size))
        self._mask_cache: dict[int, np.ndarray] = {}
        self._pos_cache: dict[int, np.ndarray] = {}

    @property
    def sys_vocab_size(self) -> int:
        return self.params["head.b"].shape[0]

    def _causal_mask(self, seq_len: int) -> np.ndarray:
        got = self._mask_cache.get(seq_len)
        if got is None:
            got = np.triu(np.full((seq_len, seq_len), _MASK_OFF, dtype=self.dtype), k=1)
            self._mask_cache[seq_len] = got[None, None, :, :]
            got = self._mask_cache[seq_len]
        return got

    def _positions(self, seq_len: int) -> np.ndarray | None:
        if self.model_cfg.d_position == 0:
            return None
        got = self._pos_cache.get(seq_len)
        if got is None:
            got = position_channel(seq_len, self.model_cfg.d_position, self.rep_cfg.base).astype(self.dtype)
            self._pos_cache[seq_len] = got
        return got

    def forward(
        self,
        records: np.ndarray,
        *,
        causal: bool,
        zero_args: np.ndarray | None = None,
        training: bool = False,
    ) -> Tensor:
        """records (B, T) -> per-position sysname logits (B, T, V)."""
        if records.ndim == 1:
            records = records[None, :]
            if zero_args is not None and zero_args.ndim == 1:
                zero_args = zero_args[None, :]
        batch, seq_len = records.shape
        cfg = self.model_cfg
        heads = cfg.tf_heads
        head_dim = self.width // heads
        p_drop = cfg.dropout
        rng = self._dropout_rng

        x = self.rep.forward(records, zero_args=zero_args)
        pos = self._positions(seq_len)
        if pos is not None:
            pos_b = np.broadcast_to(pos, (batch, seq_len, cfg.d_position))
            x = concat([x, Tensor(pos_b)], axis=-1)
        if self.input_dim != self.width:
            x = matmul(x, self.params["in_proj.W"]) + self.params["in_proj.b"]

        mask = self._causal_mask(seq_len) if causal else None
        scale = 1.0 / np.sqrt(head_dim)
        for layer in range(cfg.tf_layers):
            pre = f"tf.{layer}"
            q = matmul(x, self.params[f"{pre}.attn.Wq"]) + self.params[f"{pre}.attn.bq"]
            k = matmul(x, self.params[f"{pre}.attn.Wk"]) + self.params[f"{pre}.attn.bk"]
            v = matmul(x, self.params[f"{pre}.attn.Wv"]) + self.params[f"{pre}.attn.bv"]
            # (B, T, W) -> (B, h, T, dk)
            q = transpose(q.reshape(batch, seq_len, heads, head_dim), (0, 2, 1, 3))
            k = transpose(k.reshape(batch, seq_len, heads, head_dim), (0, 2, 1, 3))
            v = transpose(v.reshape(batch, seq_len, heads, head_dim), (0, 2, 1, 3))
            scores = matmul(q, transpose(k, (0, 1, 3, 2))) * scale
            att = softmax(scores, axis=-1, additive_mask=mask)
            if training and p_drop > 0:
                att = dropout(att, p_drop, rng, training)
            ctx = transpose(matmul(att, v), (0, 2, 1, 3)).reshape(batch, seq_len, self.width)
            out = matmul(ctx, self.params[f"{pre}.attn.Wo"]) + self.params[f"{pre}.attn.bo"]
            if training and p_drop > 0:
                out = dropout(out, p_drop, rng, training)
            x = layer_norm(x + out, self.params[f"{pre}.ln1.g"], self.params[f"{pre}.ln1.b"])

            ff = tanh(matmul(x, self.params[f"{pre}.ff.W1"]) + self.params[f"{pre}.ff.b1"])
            ff = matmul(ff, self.params[f"{pre}.ff.W2"]) + self.params[f"{pre}.ff.b2"]
            if training and p_drop > 0:
                ff = dropout(ff, p_drop, rng, training)
            x = layer_norm(x + ff, self.params[f"{pre}.ln2.g"], self.params[f"{pre}.ln2.b"])
            if not np.all(np.isfinite(x.data)):
                raise FloatingPointError(f"non-finite activation after transformer layer {layer}")

        return matmul(x, self.params["head.W"]) + self.params["head.b"]
