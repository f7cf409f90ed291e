"""Event representation inside the autodiff graph, plus model-input assembly.

The embedding tables are trainable Parameters; the sinusoidal encodings and
the position channel are gradient-free constants. The numpy-level
represent_batch() in tracelm.represent is the reference this layer is tested
against bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from ..represent import (
    ArgGroup,
    RepresentationConfig,
    RepresentationTables,
    EmbeddingTable,
    SinusoidalEncoder,
    TimestampOrigin,
)
from .autograd import Tensor, concat, gather_rows, mul
from .base import Model


class EventRepresenter:
    """Owns the four embedding tables and builds (B, T, total_dim) inputs."""

    def __init__(
        self,
        owner: Model,
        cfg: RepresentationConfig,
        sys_vocab_size: int,
        proc_vocab_size: int,
        rng: np.random.Generator,
    ):
        self.cfg = cfg
        self.sys_vocab_size = sys_vocab_size
        self.proc_vocab_size = proc_vocab_size
        tables = RepresentationTables.create_with_rng(cfg, sys_vocab_size, proc_vocab_size, rng)
        self.p_sysname = owner._param("rep.sysname", tables.sysname.matrix)
        self.p_entry = owner._param("rep.entry", tables.entry.matrix)
        self.p_ret = owner._param("rep.ret", tables.ret.matrix)
        self.p_procname = owner._param("rep.procname", tables.procname.matrix)
        self.dtype = owner.dtype
        self._enc = cfg.encoders()

    def tables(self) -> RepresentationTables:
        """Live view over the trained parameter arrays."""
        return RepresentationTables(
            sysname=EmbeddingTable(self.p_sysname.data),
            entry=EmbeddingTable(self.p_entry.data),
            ret=EmbeddingTable(self.p_ret.data),
            procname=EmbeddingTable(self.p_procname.data),
        )

    def forward(self, records: np.ndarray, zero_args: np.ndarray | None = None) -> Tensor:
        """records (..., T) RECORD_DTYPE -> Tensor (..., T, total_dim)."""
        cfg = self.cfg
        keep_c = None
        if zero_args is not None:
            keep = 1.0 - np.asarray(zero_args, dtype=np.float64)[..., None]
            keep_c = Tensor(keep.astype(self.dtype))

        call = gather_rows(self.p_sysname, records["sysname_id"].astype(np.int64))
        if ArgGroup.CALL in cfg.groups:
            extra = gather_rows(self.p_entry, records["entry"].astype(np.int64)) + gather_rows(
                self.p_ret, records["ret_class"].astype(np.int64)
            )
            call = call + (extra if keep_c is None else mul(extra, keep_c))
        parts = [call]
        if ArgGroup.PROCESS in cfg.groups:
            proc = gather_rows(self.p_procname, records["procname_id"].astype(np.int64))
            pid = Tensor(self._enc["pid"].encode_array(records["pid"].astype(np.float64)).astype(self.dtype))
            tid = Tensor(self._enc["tid"].encode_array(records["tid"].astype(np.float64)).astype(self.dtype))
            block = concat([proc, pid, tid], axis=-1)
            parts.append(block if keep_c is None else mul(block, keep_c))
        if ArgGroup.TIME in cfg.groups:
            ts = records["timestamp_us"].astype(np.float64)
            if cfg.timestamp_origin is TimestampOrigin.SEQUENCE_START:
                ts = ts - ts[..., 0:1]
            block = Tensor(self._enc["timestamp"].encode_array(ts).astype(self.dtype))
            parts.append(block if keep_c is None else mul(block, keep_c))
        return concat(parts, axis=-1)


def position_channel(seq_len: int, d_position: int, base: float = 10000.0) -> np.ndarray:
    """Sinusoidal encoding of positions 0..seq_len-1, shape (seq_len, d_position)."""
    if d_position == 0:
        return np.zeros((seq_len, 0))
    enc = SinusoidalEncoder(d_position, base)
    return enc.encode_array(np.arange(seq_len, dtype=np.float64))


def model_input(
    records: np.ndarray,
    cfg: RepresentationConfig,
    tables: RepresentationTables,
    model_cfg,
    *,
    dtype=np.float64,
) -> np.ndarray:
    """Reference (gradient-free) model input matrix for a (T,) or (B, T) window.

    Transformers get the position channel concatenated after the event
    vector; the LSTM consumes the event vector alone (its recurrence already
    encodes order).
    """
    from ..represent import represent_batch
    from .base import TRANSFORMER

    out = represent_batch(records, cfg, tables, dtype=dtype)
    if model_cfg.kind == TRANSFORMER and model_cfg.d_position > 0:
        seq_len = records.shape[-1]
        pos = position_channel(seq_len, model_cfg.d_position, cfg.base).astype(dtype)
        pos = np.broadcast_to(pos, out.shape[:-1] + (model_cfg.d_position,))
        out = np.concatenate([out, pos], axis=-1)
    return out
