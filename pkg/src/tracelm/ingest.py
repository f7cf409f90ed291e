"""Parse Babeltrace-style text lines into Events, window record streams, split datasets.

Normative line grammar (one event per line):

    [H:M:S.nnnnnnnnn] (+d.ddddddddd) HOST EVENTNAME: { cpu_id = N }, \
{ procname = "S", pid = N, tid = N }, { K = V, ... }

EVENTNAME is syscall_entry_X or syscall_exit_X. Exit events must carry an
integer `ret` in the third group; every other third-group pair is kept verbatim
in extra_args. String values are double-quoted without escapes; integer values
are bare. The wall-clock stamp is converted to a nanosecond offset from a
caller-supplied epoch (file parsing uses the first event's stamp).
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import ConfigError, TraceParseError
from .events import RECORD_DTYPE, Event, EventRecord, records_to_array

_TS_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2})\.(\d{9})$")
_DELTA_RE = re.compile(r"^[+-]?\d+\.\d{9}$")
_INT_RE = re.compile(r"^-?\d+$")

_NS_PER_DAY = 24 * 3600 * 10**9

ENTRY_PREFIX = "syscall_entry_"
EXIT_PREFIX = "syscall_exit_"


class _Scanner:
    """Tracks a character offset so parse errors can point at the culprit."""

    def __init__(self, line: str):
        self.s = line
        self.i = 0

    def fail(self, message: str, at: int | None = None):
        raise TraceParseError(message, offset=self.i if at is None else at)

    def expect(self, lit: str):
        if not self.s.startswith(lit, self.i):
            self.fail(f"expected {lit!r}")
        self.i += len(lit)

    def until(self, stop: str, what: str) -> str:
        j = self.s.find(stop, self.i)
        if j < 0:
            self.fail(f"unterminated {what}: missing {stop!r}")
        out = self.s[self.i : j]
        self.i = j
        return out

    def at_end(self) -> bool:
        return self.i >= len(self.s)


def _parse_int(sc: _Scanner, text: str, at: int, what: str, signed: bool = False) -> int:
    if not _INT_RE.match(text) or (not signed and text.startswith("-")):
        sc.fail(f"{what} must be a{'n' if signed else ' non-negative'} integer, got {text!r}", at)
    return int(text)


def _parse_group(sc: _Scanner) -> list[tuple[str, str, bool, int]]:
    """Parse `{ k = v, ... }` into (key, value, quoted, value_offset) tuples."""
    sc.expect("{")
    pairs: list[tuple[str, str, bool, int]] = []
    if sc.s.startswith(" }", sc.i):
        sc.i += 2
        return pairs
    sc.expect(" ")
    while True:
        key_at = sc.i
        key = sc.until(" ", "field name")
        if not key or "=" in key:
            sc.fail("empty or malformed field name", key_at)
        sc.expect(" = ")
        val_at = sc.i
        if sc.s.startswith('"', sc.i):
            sc.i += 1
            value = sc.until('"', "quoted string")
            sc.i += 1
            quoted = True
        else:
            # bare value: runs to the `,` or ` ` that terminates it
            j = sc.i
            while j < len(sc.s) and sc.s[j] not in ", ":
                j += 1
            value = sc.s[sc.i : j]
            if not value:
                sc.fail("empty field value", val_at)
            sc.i = j
            quoted = False
        pairs.append((key, value, quoted, val_at))
        if sc.s.startswith(", ", sc.i):
            sc.i += 2
        elif sc.s.startswith(" }", sc.i):
            sc.i += 2
            return pairs
        else:
            sc.fail("expected ', ' or ' }' after field value")


def _wallclock_ns(sc: _Scanner, text: str, at: int) -> int:
    m = _TS_RE.match(text)
    if not m:
        sc.fail("timestamp must match HH:MM:SS.nnnnnnnnn", at)
    h, mi, s, frac = (int(g) for g in m.groups())
    if h > 23 or mi > 59 or s > 59:
        sc.fail(f"timestamp field out of range: {text}", at)
    return ((h * 60 + mi) * 60 + s) * 10**9 + frac


def parse_line(line: str, *, epoch_ns: int = 0) -> Event:
    """Parse one trace line; raises TraceParseError with a character offset."""
    sc = _Scanner(line.rstrip("\r\n"))
    sc.expect("[")
    ts_at = sc.i
    wall_ns = _wallclock_ns(sc, sc.until("]", "timestamp"), ts_at)
    sc.expect("] (")
    delta_at = sc.i
    if not _DELTA_RE.match(sc.until(")", "delta")):
        sc.fail("delta must match [+-]d.ddddddddd", delta_at)
    sc.expect(") ")
    host_at = sc.i
    hostname = sc.until(" ", "hostname")
    if not hostname:
        sc.fail("empty hostname", host_at)
    sc.expect(" ")
    name_at = sc.i
    eventname = sc.until(":", "event name")
    if eventname.startswith(ENTRY_PREFIX):
        entry, sysname = True, eventname[len(ENTRY_PREFIX):]
    elif eventname.startswith(EXIT_PREFIX):
        entry, sysname = False, eventname[len(EXIT_PREFIX):]
    else:
        sc.fail(f"event name must start with {ENTRY_PREFIX!r} or {EXIT_PREFIX!r}", name_at)
    if not sysname:
        sc.fail("empty system call name", name_at)
    sc.expect(": ")

    g1 = _parse_group(sc)
    if len(g1) != 1 or g1[0][0] != "cpu_id":
        sc.fail("first group must be exactly { cpu_id = N }")
    cpu_id = _parse_int(sc, g1[0][1], g1[0][3], "cpu_id")

    sc.expect(", ")
    g2 = _parse_group(sc)
    if [p[0] for p in g2] != ["procname", "pid", "tid"]:
        sc.fail("second group must be { procname = \"S\", pid = N, tid = N }")
    if not g2[0][2]:
        sc.fail("procname must be quoted", g2[0][3])
    procname = g2[0][1]
    pid = _parse_int(sc, g2[1][1], g2[1][3], "pid")
    tid = _parse_int(sc, g2[2][1], g2[2][3], "tid")

    sc.expect(", ")
    g3 = _parse_group(sc)
    if not sc.at_end():
        sc.fail("trailing characters after final group")

    ret: int | None = None
    extra_args: dict[str, str] = {}
    for key, value, quoted, val_at in g3:
        if key == "ret" and not entry and ret is None:
            ret = _parse_int(sc, value, val_at, "ret", signed=True)
        else:
            if key in extra_args:
                sc.fail(f"duplicate argument {key!r}", val_at)
            extra_args[key] = value
    if not entry and ret is None:
        sc.fail("exit event missing integer ret in third group")

    timestamp_ns = wall_ns - epoch_ns
    if timestamp_ns < 0:
        sc.fail("timestamp precedes epoch", ts_at)
    return Event(
        timestamp_ns=timestamp_ns,
        hostname=hostname,
        cpu_id=cpu_id,
        procname=procname,
        pid=pid,
        tid=tid,
        sysname=sysname,
        entry=entry,
        ret=ret,
        extra_args=extra_args,
    )


def _format_value(value: str) -> str:
    if _INT_RE.match(value):
        return value
    if '"' in value:
        raise ValueError(f"cannot format value containing quotes: {value!r}")
    return f'"{value}"'


def format_line(e: Event, *, epoch_ns: int = 0, prev_timestamp_ns: int | None = None) -> str:
    """Companion formatter; parse_line(format_line(e)) == e for expressible events.

    Wall-clock rendering wraps at 24 h. The delta field is recomputed from
    prev_timestamp_ns (0 for the first event of a stream).
    """
    wall = (epoch_ns + e.timestamp_ns) % _NS_PER_DAY
    sec, frac = divmod(wall, 10**9)
    h, rem = divmod(sec, 3600)
    mi, s = divmod(rem, 60)
    delta_ns = 0 if prev_timestamp_ns is None else e.timestamp_ns - prev_timestamp_ns
    if delta_ns < 0:
        raise ValueError("events are out of order: negative delta")
    dsec, dfrac = divmod(delta_ns, 10**9)
    name = (ENTRY_PREFIX if e.entry else EXIT_PREFIX) + e.sysname

    third: list[str] = [] if e.entry else [f"ret = {e.ret}"]
    third += [f"{k} = {_format_value(v)}" for k, v in e.extra_args.items()]
    g3 = "{ " + ", ".join(third) + " }" if third else "{ }"
    return (
        f"[{h:02d}:{mi:02d}:{s:02d}.{frac:09d}] (+{dsec}.{dfrac:09d}) "
        f"{e.hostname} {name}: {{ cpu_id = {e.cpu_id} }}, "
        f'{{ procname = "{e.procname}", pid = {e.pid}, tid = {e.tid} }}, {g3}'
    )


def parse_trace(lines: Iterable[str]) -> Iterator[Event]:
    """Parse a text trace; the first event's wall clock becomes the epoch (offset 0)."""
    epoch_ns: int | None = None
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            if epoch_ns is None:
                first = parse_line(line, epoch_ns=0)
                epoch_ns = first.timestamp_ns
                yield replace(first, timestamp_ns=0)
            else:
                yield parse_line(line, epoch_ns=epoch_ns)
        except TraceParseError as exc:
            raise TraceParseError(str(exc).split(": ", 1)[1], exc.offset, line_no) from None


def parse_trace_file(path: str | Path) -> Iterator[Event]:
    with open(path, "r", encoding="utf-8") as fh:
        yield from parse_trace(fh)


def format_trace(events: Iterable[Event], *, epoch_ns: int = 0) -> Iterator[str]:
    prev: int | None = None
    for e in events:
        yield format_line(e, epoch_ns=epoch_ns, prev_timestamp_ns=prev)
        prev = e.timestamp_ns


def write_trace_text(events: Iterable[Event], dest: str | Path | IO[str], *, epoch_ns: int = 0) -> int:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            return write_trace_text(events, fh, epoch_ns=epoch_ns)
    n = 0
    for line in format_trace(events, epoch_ns=epoch_ns):
        dest.write(line + "\n")
        n += 1
    return n


@dataclass(frozen=True, eq=False)
class Sequence:
    """Fixed-length window of event records, stored as a RECORD_DTYPE array."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.dtype != RECORD_DTYPE or self.data.ndim != 1 or len(self.data) < 2:
            raise ValueError("Sequence wants a 1-d RECORD_DTYPE array of length >= 2")
        ts = self.data["timestamp_us"]
        if np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing within a sequence")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def records(self) -> list[EventRecord]:
        from .events import array_to_records

        return array_to_records(self.data)


def as_record_array(records) -> np.ndarray:
    if isinstance(records, np.ndarray):
        if records.dtype != RECORD_DTYPE:
            raise ValueError(f"expected RECORD_DTYPE array, got dtype {records.dtype}")
        return records
    return records_to_array(list(records))


def window(records, window_len: int = 256) -> list[Sequence]:
    """Cut a record stream into consecutive non-overlapping windows.

    The trailing remainder shorter than window_len is dropped, so the
    concatenation of the outputs is exactly the stream prefix of length
    window_len * floor(n / window_len).
    """
    if window_len < 2:
        raise ConfigError(f"window_len must be >= 2, got {window_len}")
    arr = as_record_array(records)
    n_win = len(arr) // window_len
    return [Sequence(arr[i * window_len : (i + 1) * window_len].copy()) for i in range(n_win)]


def stack_sequences(sequences: Iterable[Sequence]) -> np.ndarray:
    """Stack same-length sequences into an (N, T) record array."""
    seqs = list(sequences)
    if not seqs:
        return np.empty((0, 0), dtype=RECORD_DTYPE)
    return np.stack([s.data for s in seqs])


@dataclass(frozen=True)
class SplitSpec:
    """Validation split: |valid| = round(valid_fraction * n), seeded shuffle."""

    valid_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.valid_fraction < 1.0:
            raise ConfigError(f"valid_fraction must be in (0, 1), got {self.valid_fraction}")


def split(sequences: list, spec: SplitSpec) -> tuple[list, list]:
    """Partition sequences into (eval, valid) lists, deterministic under spec.seed.

    Both parts preserve the input order; rounding is half-up.
    """
    n = len(sequences)
    if n < 4:
        raise ValueError(f"need at least 4 sequences to split, got {n}")
    n_valid = int(n * spec.valid_fraction + 0.5)
    order = list(range(n))
    random.Random(spec.seed).shuffle(order)
    valid_idx = set(order[:n_valid])
    eval_part = [sequences[i] for i in range(n) if i not in valid_idx]
    valid_part = [sequences[i] for i in range(n) if i in valid_idx]
    return eval_part, valid_part
