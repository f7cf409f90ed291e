"""Trace-event domain types: events, vocabularies, integer records, JSONL interchange.

The canonical JSONL interchange format is one object per line with keys exactly
{ts_ns, host, cpu, procname, pid, tid, sysname, entry, ret, args}; ret is null
on entry events and args is an ordered string->string object.
"""

from __future__ import annotations

import hashlib
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import ConfigError, JsonlParseError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)
PAD_ID = 0
UNK_ID = 1
MASK_ID = 2

_JSONL_KEYS = ("ts_ns", "host", "cpu", "procname", "pid", "tid", "sysname", "entry", "ret", "args")


class RetClass(IntEnum):
    """Simplified system-call return status."""

    SUCCESS = 0
    FAILURE = 1
    UNAVAILABLE = 2


def ret_simplify(ret: int | None) -> RetClass:
    """SUCCESS if ret is present and >= 0, FAILURE if present and < 0, else UNAVAILABLE."""
    if ret is None:
        return RetClass.UNAVAILABLE
    return RetClass.SUCCESS if ret >= 0 else RetClass.FAILURE


@dataclass(frozen=True, slots=True)
class Event:
    """One parsed trace line.

    timestamp_ns is an offset from the start of the trace, never a wall-clock
    value. ret must be present exactly on exit events. extra_args collects the
    unmodeled call arguments (fd, filename, ...) in their original order.
    """

    timestamp_ns: int
    hostname: str
    cpu_id: int
    procname: str
    pid: int
    tid: int
    sysname: str
    entry: bool
    ret: int | None = None
    extra_args: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.timestamp_ns < 0:
            raise ValueError(f"timestamp_ns must be >= 0, got {self.timestamp_ns}")
        if self.cpu_id < 0 or self.pid < 0 or self.tid < 0:
            raise ValueError("cpu_id, pid and tid must be non-negative")
        if not self.sysname or any(c.isspace() for c in self.sysname):
            raise ValueError(f"sysname must be non-empty without whitespace, got {self.sysname!r}")
        if self.entry and self.ret is not None:
            raise ValueError("entry events carry no return value")
        if not self.entry and self.ret is None:
            raise ValueError("exit events must carry a return value")


class Vocab:
    """Bidirectional token<->id map with PAD/UNK/MASK reserved at ids 0..2.

    Unknown tokens map to UNK_ID on lookup; ids are stable for a given corpus.
    """

    __slots__ = ("tokens", "index")

    def __init__(self, corpus_tokens: Iterable[str] = ()):
        tokens = list(RESERVED_TOKENS)
        for tok in corpus_tokens:
            if tok in RESERVED_TOKENS:
                raise ValueError(f"corpus token collides with reserved token {tok!r}")
            tokens.append(tok)
        index = {tok: i for i, tok in enumerate(tokens)}
        if len(index) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = tokens
        self.index = index

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def token(self, i: int) -> str:
        if not 0 <= i < len(self.tokens):
            raise IndexError(f"id {i} out of range for vocab of size {len(self.tokens)}")
        return self.tokens[i]

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"tokens": self.tokens}) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(obj["tokens"][len(RESERVED_TOKENS):])


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocab:
    """Build a Vocab from a token stream.

    Tokens with count >= min_count are kept, ordered by descending count then
    lexicographically, so identical corpora always yield identical vocabs.
    Corpus occurrences of the reserved token strings themselves are dropped.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(corpus)
    for tok in RESERVED_TOKENS:
        counts.pop(tok, None)
    kept = [tok for tok, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocab(kept)


@dataclass(frozen=True, slots=True)
class EventRecord:
    """Integer-coded event, ready for the representation layer."""

    sysname_id: int
    entry: bool
    ret_class: RetClass
    procname_id: int
    pid: int
    tid: int
    timestamp_us: int

    def __post_init__(self):
        if self.sysname_id < 0 or self.procname_id < 0:
            raise ValueError("vocab ids must be non-negative")
        if self.pid < 0 or self.tid < 0 or self.timestamp_us < 0:
            raise ValueError("pid, tid and timestamp_us must be non-negative")


#: numpy layout used to hold large record streams without per-event objects
RECORD_DTYPE = np.dtype(
    [
        ("sysname_id", np.int32),
        ("entry", np.int8),
        ("ret_class", np.int8),
        ("procname_id", np.int32),
        ("pid", np.int32),
        ("tid", np.int32),
        ("timestamp_us", np.int64),
    ]
)


def encode_event(e: Event, sys_vocab: Vocab, proc_vocab: Vocab) -> EventRecord:
    """Code an Event against the two vocabs; unknown names fall back to UNK."""
    return EventRecord(
        sysname_id=sys_vocab.id(e.sysname),
        entry=e.entry,
        ret_class=ret_simplify(e.ret),
        procname_id=proc_vocab.id(e.procname),
        pid=e.pid,
        tid=e.tid,
        timestamp_us=e.timestamp_ns // 1000,
    )


def records_to_array(records: Iterable[EventRecord]) -> np.ndarray:
    rows = [
        (r.sysname_id, int(r.entry), int(r.ret_class), r.procname_id, r.pid, r.tid, r.timestamp_us)
        for r in records
    ]
    return np.array(rows, dtype=RECORD_DTYPE)


def array_to_records(arr: np.ndarray) -> list[EventRecord]:
    return [
        EventRecord(
            sysname_id=int(row["sysname_id"]),
            entry=bool(row["entry"]),
            ret_class=RetClass(int(row["ret_class"])),
            procname_id=int(row["procname_id"]),
            pid=int(row["pid"]),
            tid=int(row["tid"]),
            timestamp_us=int(row["timestamp_us"]),
        )
        for row in arr
    ]


def encode_events(
    events: Iterable[Event], sys_vocab: Vocab, proc_vocab: Vocab, chunk: int = 1 << 16
) -> np.ndarray:
    """Stream Events straight into a RECORD_DTYPE array (no EventRecord objects).

    Consumes the stream in bounded chunks so multi-million-event traces do not
    materialize an intermediate Python list.
    """
    sys_id = sys_vocab.index.get
    proc_id = proc_vocab.index.get
    parts: list[np.ndarray] = []
    rows: list[tuple] = []
    for e in events:
        rows.append(
            (
                sys_id(e.sysname, UNK_ID),
                int(e.entry),
                int(ret_simplify(e.ret)),
                proc_id(e.procname, UNK_ID),
                e.pid,
                e.tid,
                e.timestamp_ns // 1000,
            )
        )
        if len(rows) >= chunk:
            parts.append(np.array(rows, dtype=RECORD_DTYPE))
            rows = []
    if rows or not parts:
        parts.append(np.array(rows, dtype=RECORD_DTYPE))
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def event_to_obj(e: Event) -> dict:
    return {
        "ts_ns": e.timestamp_ns,
        "host": e.hostname,
        "cpu": e.cpu_id,
        "procname": e.procname,
        "pid": e.pid,
        "tid": e.tid,
        "sysname": e.sysname,
        "entry": e.entry,
        "ret": e.ret,
        "args": dict(e.extra_args),
    }


def _obj_to_event(obj: dict) -> Event:
    if not isinstance(obj, dict) or tuple(obj.keys()) != _JSONL_KEYS:
        raise ValueError(f"keys must be exactly {list(_JSONL_KEYS)}")
    args = obj["args"]
    if not isinstance(args, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in args.items()
    ):
        raise ValueError("args must be a string->string object")
    return Event(
        timestamp_ns=obj["ts_ns"],
        hostname=obj["host"],
        cpu_id=obj["cpu"],
        procname=obj["procname"],
        pid=obj["pid"],
        tid=obj["tid"],
        sysname=obj["sysname"],
        entry=obj["entry"],
        ret=obj["ret"],
        extra_args=dict(args),
    )


def write_jsonl(events: Iterable[Event], dest: str | Path | IO[str]) -> int:
    """Write events to the canonical JSONL format; returns the number of lines."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            return write_jsonl(events, fh)
    n = 0
    for e in events:
        dest.write(json.dumps(event_to_obj(e), separators=(", ", ": ")) + "\n")
        n += 1
    return n


def read_jsonl(src: str | Path | IO[str] | Iterable[str]) -> Iterator[Event]:
    """Parse canonical JSONL; raises JsonlParseError with the offending line number."""
    if isinstance(src, (str, Path)):
        with open(src, "r", encoding="utf-8") as fh:
            yield from read_jsonl(fh)
        return
    for line_no, line in enumerate(src, start=1):
        text = line.rstrip("\n")
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise JsonlParseError(f"invalid JSON ({exc.msg})", line_no, text) from None
        try:
            yield _obj_to_event(obj)
        except (ValueError, TypeError, KeyError) as exc:
            raise JsonlParseError(str(exc), line_no, text) from None


def jsonl_dumps(events: Iterable[Event]) -> str:
    buf = io.StringIO()
    write_jsonl(events, buf)
    return buf.getvalue()
