"""Per-event vector representation: learned embeddings plus sinusoidal encodings.

An event vector is the concatenation of up to three argument groups:

  call    embed(sysname) + embed(entry) + embed(ret_class)      (added, dim d_sysname)
  process embed(procname) || encode(pid) || encode(tid)
  time    encode(timestamp_us - origin)

The call-group additions and the process/time groups are each optional
(ablation switches); the bare sysname embedding is always present. Sequence
position is deliberately NOT part of this vector; models concatenate their own
position channel at input time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .events import RECORD_DTYPE, EventRecord


class ArgGroup(Enum):
    CALL = "call"
    PROCESS = "process"
    TIME = "time"


class TimestampOrigin(Enum):
    SEQUENCE_START = "sequence_start"
    TRACE_START = "trace_start"


@dataclass(frozen=True)
class SinusoidalEncoder:
    """Deterministic scalar->vector encoding with interleaved sin/cos.

    out[2i] = sin(x / base**(2i/dim)), out[2i+1] = cos(x / base**(2i/dim)).
    """

    dim: int
    base: float = 10000.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ConfigError(f"encoder dim must be a positive even integer, got {self.dim}")
        if not self.base > 1.0:
            raise ConfigError(f"encoder base must be > 1, got {self.base}")

    @property
    def frequencies(self) -> np.ndarray:
        i2 = np.arange(0, self.dim, 2, dtype=np.float64)
        return self.base ** (-i2 / self.dim)

    def encode(self, x: float) -> np.ndarray:
        return self.encode_array(np.asarray(x, dtype=np.float64))

    def encode_array(self, xs: np.ndarray) -> np.ndarray:
        """Encode any-shaped array of scalars to shape xs.shape + (dim,)."""
        angles = np.asarray(xs, dtype=np.float64)[..., None] * self.frequencies
        out = np.empty(angles.shape[:-1] + (self.dim,), dtype=np.float64)
        out[..., 0::2] = np.sin(angles)
        out[..., 1::2] = np.cos(angles)
        return out


def encode(x: float, enc: SinusoidalEncoder) -> np.ndarray:
    if not np.isfinite(x):
        raise ValueError(f"encoded scalar must be finite, got {x}")
    return enc.encode(float(x))


@dataclass(frozen=True)
class EmbeddingTable:
    """Trainable lookup table; row i is the embedding of vocab id i."""

    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise ConfigError("embedding matrix must be 2-d with dim >= 1")
        if not np.all(np.isfinite(self.matrix)):
            raise ConfigError("embedding matrix must be finite")

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def init_uniform(cls, rows: int, dim: int, rng: np.random.Generator, scale: float = 0.05):
        return cls(rng.uniform(-scale, scale, size=(rows, dim)))


def embed(idx: int, table: EmbeddingTable) -> np.ndarray:
    """Row lookup, mathematically one_hot(idx) @ table.matrix."""
    if not 0 <= idx < table.rows:
        raise IndexError(f"id {idx} out of range for table with {table.rows} rows")
    return table.matrix[idx].copy()


def save_table(table: EmbeddingTable, path: str | Path, *, seed: int = 0) -> None:
    """Text dump: one header line `rows dim seed`, then one row per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{table.rows} {table.dim} {seed}\n")
        for row in table.matrix:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_table(path: str | Path) -> tuple[EmbeddingTable, int]:
    with open(path, "r", encoding="utf-8") as fh:
        rows, dim, seed = (int(v) for v in fh.readline().split())
        matrix = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if matrix.shape != (rows, dim):
        raise ValueError(f"table header {(rows, dim)} does not match data {matrix.shape}")
    return EmbeddingTable(matrix), seed


@dataclass(frozen=True)
class RepresentationConfig:
    """Argument groups and per-channel dimensions of the event vector."""

    groups: frozenset = field(default_factory=frozenset)
    d_sysname: int = 32
    d_procname: int = 16
    d_pid: int = 4
    d_tid: int = 4
    d_timestamp: int = 8
    timestamp_origin: TimestampOrigin = TimestampOrigin.SEQUENCE_START
    base: float = 10000.0

    def __post_init__(self):
        bad = {g for g in self.groups if not isinstance(g, ArgGroup)}
        if bad:
            raise ConfigError(f"unknown argument groups: {bad}")
        for name in ("d_sysname", "d_procname", "d_pid", "d_tid", "d_timestamp"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("d_pid", "d_tid", "d_timestamp"):
            if getattr(self, name) % 2 != 0:
                raise ConfigError(f"{name} must be even (sinusoidal encoder)")

    @property
    def total_dim(self) -> int:
        d = self.d_sysname
        if ArgGroup.PROCESS in self.groups:
            d += self.d_procname + self.d_pid + self.d_tid
        if ArgGroup.TIME in self.groups:
            d += self.d_timestamp
        return d

    def encoders(self) -> dict[str, SinusoidalEncoder]:
        return {
            "pid": SinusoidalEncoder(self.d_pid, self.base),
            "tid": SinusoidalEncoder(self.d_tid, self.base),
            "timestamp": SinusoidalEncoder(self.d_timestamp, self.base),
        }


@dataclass(frozen=True)
class RepresentationTables:
    """The four trainable tables behind one RepresentationConfig."""

    sysname: EmbeddingTable
    entry: EmbeddingTable      # 2 rows: exit=0, entry=1
    ret: EmbeddingTable        # 3 rows: SUCCESS, FAILURE, UNAVAILABLE
    procname: EmbeddingTable

    @classmethod
    def create(cls, cfg: RepresentationConfig, sys_vocab_size: int, proc_vocab_size: int, seed: int):
        return cls.create_with_rng(cfg, sys_vocab_size, proc_vocab_size, np.random.default_rng(seed))

    @classmethod
    def create_with_rng(
        cls, cfg: RepresentationConfig, sys_vocab_size: int, proc_vocab_size: int, rng: np.random.Generator
    ):
        return cls(
            sysname=EmbeddingTable.init_uniform(sys_vocab_size, cfg.d_sysname, rng),
            entry=EmbeddingTable.init_uniform(2, cfg.d_sysname, rng),
            ret=EmbeddingTable.init_uniform(3, cfg.d_sysname, rng),
            procname=EmbeddingTable.init_uniform(proc_vocab_size, cfg.d_procname, rng),
        )

    def check_dims(self, cfg: RepresentationConfig) -> None:
        if self.sysname.dim != cfg.d_sysname:
            raise ConfigError(f"sysname table dim {self.sysname.dim} != d_sysname {cfg.d_sysname}")
        if self.entry.dim != cfg.d_sysname or self.entry.rows != 2:
            raise ConfigError("entry table must be 2 rows of dim d_sysname")
        if self.ret.dim != cfg.d_sysname or self.ret.rows != 3:
            raise ConfigError("ret table must be 3 rows of dim d_sysname")
        if self.procname.dim != cfg.d_procname:
            raise ConfigError(
                f"procname table dim {self.procname.dim} != d_procname {cfg.d_procname}"
            )


def represent(
    record: EventRecord,
    position: int,
    cfg: RepresentationConfig,
    tables: RepresentationTables,
    *,
    origin_us: int = 0,
) -> np.ndarray:
    """Build the event vector for one record.

    `position` is accepted for interface symmetry with the model input but is
    not encoded here. origin_us is subtracted from the timestamp before
    encoding (the caller passes the window's first timestamp in
    SEQUENCE_START mode; 0 in TRACE_START mode).
    """
    if position < 0:
        raise ValueError(f"position must be >= 0, got {position}")
    tables.check_dims(cfg)
    enc = cfg.encoders()

    call = embed(record.sysname_id, tables.sysname)
    if ArgGroup.CALL in cfg.groups:
        # grouped as emb + (entry + ret) to match the batched path bit-for-bit
        call = call + (embed(int(record.entry), tables.entry) + embed(int(record.ret_class), tables.ret))
    parts = [call]
    if ArgGroup.PROCESS in cfg.groups:
        parts.append(embed(record.procname_id, tables.procname))
        parts.append(enc["pid"].encode(float(record.pid)))
        parts.append(enc["tid"].encode(float(record.tid)))
    if ArgGroup.TIME in cfg.groups:
        parts.append(enc["timestamp"].encode(float(record.timestamp_us - origin_us)))
    return np.concatenate(parts)


def sequence_origin_us(records: np.ndarray, cfg: RepresentationConfig) -> int:
    if cfg.timestamp_origin is TimestampOrigin.SEQUENCE_START:
        return int(records["timestamp_us"].reshape(-1)[0]) if records.size else 0
    return 0


def represent_batch(
    records: np.ndarray,
    cfg: RepresentationConfig,
    tables: RepresentationTables,
    *,
    zero_args: np.ndarray | None = None,
    dtype=np.float64,
) -> np.ndarray:
    """Vectorized representation of a (..., T) record array to (..., T, total_dim).

    zero_args marks positions whose argument channels are zeroed (masked MLM
    inputs): the entry/ret additions and the process/time blocks vanish there
    while the sysname embedding (typically the MASK row) is kept.

    With SEQUENCE_START origin, timestamps are taken relative to the first
    event of each trailing-axis window.
    """
    if records.dtype != RECORD_DTYPE:
        raise ValueError(f"expected RECORD_DTYPE array, got {records.dtype}")
    tables.check_dims(cfg)
    enc = cfg.encoders()
    keep = None
    if zero_args is not None:
        keep = 1.0 - np.asarray(zero_args, dtype=np.float64)[..., None]

    call = tables.sysname.matrix[records["sysname_id"]]
    if ArgGroup.CALL in cfg.groups:
        extra = tables.entry.matrix[records["entry"].astype(np.int64)]
        extra = extra + tables.ret.matrix[records["ret_class"].astype(np.int64)]
        call = call + (extra if keep is None else extra * keep)
    parts = [call]
    if ArgGroup.PROCESS in cfg.groups:
        proc = tables.procname.matrix[records["procname_id"]]
        pid = enc["pid"].encode_array(records["pid"].astype(np.float64))
        tid = enc["tid"].encode_array(records["tid"].astype(np.float64))
        block = np.concatenate([proc, pid, tid], axis=-1)
        parts.append(block if keep is None else block * keep)
    if ArgGroup.TIME in cfg.groups:
        ts = records["timestamp_us"].astype(np.float64)
        if cfg.timestamp_origin is TimestampOrigin.SEQUENCE_START:
            ts = ts - ts[..., 0:1]
        block = enc["timestamp"].encode_array(ts)
        parts.append(block if keep is None else block * keep)
    return np.concatenate(parts, axis=-1).astype(dtype, copy=False)


def represent_sequence(
    records: np.ndarray,
    cfg: RepresentationConfig,
    tables: RepresentationTables,
    **kwargs,
) -> np.ndarray:
    """(T,) records to (T, total_dim); see represent_batch."""
    return represent_batch(records, cfg, tables, **kwargs)


def rep_config_to_dict(cfg: RepresentationConfig) -> dict:
    return {
        "groups": sorted(g.value for g in cfg.groups),
        "d_sysname": cfg.d_sysname,
        "d_procname": cfg.d_procname,
        "d_pid": cfg.d_pid,
        "d_tid": cfg.d_tid,
        "d_timestamp": cfg.d_timestamp,
        "timestamp_origin": cfg.timestamp_origin.value,
        "base": cfg.base,
    }


def rep_config_from_dict(d: dict) -> RepresentationConfig:
    return RepresentationConfig(
        groups=frozenset(ArgGroup(g) for g in d["groups"]),
        d_sysname=d["d_sysname"],
        d_procname=d["d_procname"],
        d_pid=d["d_pid"],
        d_tid=d["d_tid"],
        d_timestamp=d["d_timestamp"],
        timestamp_origin=TimestampOrigin(d["timestamp_origin"]),
        base=d["base"],
    )


def iter_group_slices(cfg: RepresentationConfig) -> dict[str, slice]:
    """Column ranges of each active block inside the event vector."""
    out = {"call": slice(0, cfg.d_sysname)}
    at = cfg.d_sysname
    if ArgGroup.PROCESS in cfg.groups:
        out["procname"] = slice(at, at + cfg.d_procname)
        at += cfg.d_procname
        out["pid"] = slice(at, at + cfg.d_pid)
        at += cfg.d_pid
        out["tid"] = slice(at, at + cfg.d_tid)
        at += cfg.d_tid
    if ArgGroup.TIME in cfg.groups:
        out["timestamp"] = slice(at, at + cfg.d_timestamp)
        at += cfg.d_timestamp
    return out
