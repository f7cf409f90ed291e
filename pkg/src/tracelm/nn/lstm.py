"""Unidirectional stacked LSTM language model over event vectors.

The recurrence provides order, so no position channel is concatenated; the
output at step t is the next-sysname distribution for step t+1. Causality is
structural: step t never sees inputs at positions > t.
"""

from __future__ import annotations

import numpy as np

from ..represent import RepresentationConfig
from .autograd import Tensor, dropout, matmul, sigmoid, stack_last, tanh
from .base import LSTM, Model, ModelConfig
from .inputs import EventRepresenter


class LstmLm(Model):
    kind = LSTM

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
        if model_cfg.kind != LSTM:
            raise ValueError(f"LstmLm built with kind {model_cfg.kind!r}")
        self.model_cfg = model_cfg
        self.rep_cfg = rep_cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.rep = EventRepresenter(self, rep_cfg, sys_vocab_size, proc_vocab_size, rng)
        self._dropout_rng = np.random.default_rng(seed + 0x5EED)

        hidden = model_cfg.lstm_hidden
        in_dim = rep_cfg.total_dim
        for layer in range(model_cfg.lstm_layers):
            d = in_dim if layer == 0 else hidden
            self._param(f"lstm.{layer}.W_x", self._linear_init(rng, d, 4 * hidden))
            self._param(f"lstm.{layer}.W_h", self._linear_init(rng, hidden, 4 * hidden))
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0  # forget-gate bias keeps early memory open
            self._param(f"lstm.{layer}.b", bias)
        self._param("head.W", self._linear_init(rng, hidden, sys_vocab_size))
        self._param("head.b", np.zeros(sys_vocab_size))

    @property
    def sys_vocab_size(self) -> int:
        return self.params["head.b"].shape[0]

    def forward(self, records: np.ndarray, *, training: bool = False) -> Tensor:
        """records (B, T) -> next-sysname logits (B, T, V)."""
        if records.ndim == 1:
            records = records[None, :]
        x = self.rep.forward(records)  # (B, T, D)
        batch, seq_len = records.shape
        hidden = self.model_cfg.lstm_hidden
        p_drop = self.model_cfg.dropout

        h = [Tensor(np.zeros((batch, hidden), dtype=self.dtype)) for _ in range(self.model_cfg.lstm_layers)]
        c = list(h)
        outs = []
        for t in range(seq_len):
            inp = x[:, t, :]
            for layer in range(self.model_cfg.lstm_layers):
                z = (
                    matmul(inp, self.params[f"lstm.{layer}.W_x"])
                    + matmul(h[layer], self.params[f"lstm.{layer}.W_h"])
                    + self.params[f"lstm.{layer}.b"]
                )
                i_g = sigmoid(z[:, 0 * hidden : 1 * hidden])
                f_g = sigmoid(z[:, 1 * hidden : 2 * hidden])
                g_g = tanh(z[:, 2 * hidden : 3 * hidden])
                o_g = sigmoid(z[:, 3 * hidden : 4 * hidden])
                c[layer] = f_g * c[layer] + i_g * g_g
                h[layer] = o_g * tanh(c[layer])
                inp = h[layer]
                if training and p_drop > 0 and layer < self.model_cfg.lstm_layers - 1:
                    inp = dropout(inp, p_drop, self._dropout_rng, training)
            outs.append(inp)
        hs = stack_last(outs, axis=1)  # (B, T, H)
        logits = matmul(hs, self.params["head.W"]) + self.params["head.b"]
        if not np.all(np.isfinite(logits.data)):
            raise FloatingPointError("non-finite activation in LSTM output head")
        return logits
