import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracelm.errors import ConfigError, TraceParseError
from tracelm.events import Event, EventRecord, RetClass, records_to_array
from tracelm.ingest import (
    Sequence,
    SplitSpec,
    format_line,
    format_trace,
    parse_line,
    parse_trace,
    split,
    stack_sequences,
    window,
)

EXIT_LINE = (
    "[17:10:01.000000500] (+0.000000100) web1 syscall_exit_read: { cpu_id = 0 }, "
    '{ procname = "apache2", pid = 10, tid = 11 }, { ret = 8 }'
)
ENTRY_LINE = (
    "[17:10:01.000000600] (+0.000000100) web1 syscall_entry_open: { cpu_id = 1 }, "
    '{ procname = "apache2", pid = 10, tid = 11 }, { filename = "/etc/x", flags = 0 }'
)


class TestParseLine:
    def test_exit_event_fields(self):
        e = parse_line(EXIT_LINE)
        assert e.sysname == "read"
        assert e.entry is False
        assert e.ret == 8
        assert e.cpu_id == 0
        assert e.procname == "apache2"
        assert (e.pid, e.tid) == (10, 11)
        assert e.hostname == "web1"
        assert e.extra_args == {}
        # 17:10:01.000000500 as ns-of-day, epoch 0
        assert e.timestamp_ns == ((17 * 60 + 10) * 60 + 1) * 10**9 + 500

    def test_entry_event_collects_extra_args(self):
        e = parse_line(ENTRY_LINE)
        assert e.entry is True
        assert e.ret is None
        assert e.extra_args == {"filename": "/etc/x", "flags": "0"}

    def test_garbage_fails_at_offset_zero(self):
        with pytest.raises(TraceParseError) as exc:
            parse_line("garbage")
        assert exc.value.offset == 0

    def test_epoch_offsets_timestamp(self):
        epoch = ((17 * 60 + 10) * 60 + 1) * 10**9
        assert parse_line(EXIT_LINE, epoch_ns=epoch).timestamp_ns == 500

    def test_timestamp_before_epoch_rejected(self):
        with pytest.raises(TraceParseError):
            parse_line(EXIT_LINE, epoch_ns=10**18)

    def test_unknown_event_prefix_rejected(self):
        line = EXIT_LINE.replace("syscall_exit_read", "sched_switch")
        with pytest.raises(TraceParseError) as exc:
            parse_line(line)
        assert exc.value.offset == line.index("sched_switch")

    def test_non_integer_field_rejected(self):
        line = EXIT_LINE.replace("pid = 10", "pid = ten")
        with pytest.raises(TraceParseError):
            parse_line(line)

    def test_missing_brace_group_rejected(self):
        line = EXIT_LINE.split(", {")[0]
        with pytest.raises(TraceParseError):
            parse_line(line)

    def test_exit_without_ret_rejected(self):
        line = EXIT_LINE.replace("{ ret = 8 }", "{ fd = 3 }")
        with pytest.raises(TraceParseError):
            parse_line(line)

    def test_empty_third_group_on_entry(self):
        line = ENTRY_LINE.replace('{ filename = "/etc/x", flags = 0 }', "{ }")
        e = parse_line(line)
        assert e.extra_args == {}


def grammar_event_strategy():
    name = st.from_regex(r"[a-z_][a-z0-9_]{0,10}", fullmatch=True)
    bare_or_str = st.one_of(
        st.integers(min_value=-(10**9), max_value=10**9).map(str),
        st.from_regex(r"[a-zA-Z/_.][a-zA-Z0-9/_. -]{0,10}", fullmatch=True),
    )
    return st.builds(
        lambda ts, cpu, proc, pid, tid, sysname, is_entry, ret, args: Event(
            timestamp_ns=ts,
            hostname="host-0",
            cpu_id=cpu,
            procname=proc,
            pid=pid,
            tid=tid,
            sysname=sysname,
            entry=is_entry,
            ret=None if is_entry else ret,
            extra_args=args,
        ),
        st.integers(min_value=0, max_value=86_399 * 10**9),
        st.integers(min_value=0, max_value=63),
        name,
        st.integers(min_value=0, max_value=2**22),
        st.integers(min_value=0, max_value=2**22),
        name,
        st.booleans(),
        st.integers(min_value=-(2**31), max_value=2**31),
        st.dictionaries(name.filter(lambda k: k != "ret"), bare_or_str, max_size=3),
    )


class TestFormatRoundTrip:
    def test_format_then_parse_is_identity(self):
        e = parse_line(EXIT_LINE)
        assert parse_line(format_line(e)) == e

    @settings(max_examples=200, deadline=None)
    @given(grammar_event_strategy())
    def test_roundtrip_property(self, e):
        assert parse_line(format_line(e)) == e

    def test_trace_roundtrip_rebases_to_first_event(self):
        events = [
            parse_line(EXIT_LINE, epoch_ns=((17 * 60 + 10) * 60 + 1) * 10**9),
            parse_line(ENTRY_LINE, epoch_ns=((17 * 60 + 10) * 60 + 1) * 10**9),
        ]
        # first event at offset 500 -> re-parsing shifts everything down by 500
        lines = list(format_trace(events, epoch_ns=7 * 3600 * 10**9))
        back = list(parse_trace(lines))
        assert back[0].timestamp_ns == 0
        assert back[1].timestamp_ns == events[1].timestamp_ns - events[0].timestamp_ns

    def test_parse_trace_error_carries_line_number(self):
        lines = [EXIT_LINE, "garbage"]
        with pytest.raises(TraceParseError) as exc:
            list(parse_trace(lines))
        assert exc.value.line_no == 2


def make_records(n, start_us=0):
    return records_to_array(
        [
            EventRecord(
                sysname_id=3 + (i % 4),
                entry=bool(i % 2 == 0),
                ret_class=RetClass.UNAVAILABLE if i % 2 == 0 else RetClass.SUCCESS,
                procname_id=3,
                pid=100,
                tid=101,
                timestamp_us=start_us + i,
            )
            for i in range(n)
        ]
    )


class TestWindow:
    def test_1000_records_give_3_windows_of_256(self):
        seqs = window(make_records(1000), 256)
        assert len(seqs) == 3
        assert all(len(s) == 256 for s in seqs)

    def test_exact_multiple(self):
        assert len(window(make_records(256), 256)) == 1

    def test_below_one_window(self):
        assert window(make_records(255), 256) == []

    def test_flatten_reproduces_prefix(self):
        recs = make_records(1000)
        seqs = window(recs, 256)
        flat = np.concatenate([s.data for s in seqs])
        np.testing.assert_array_equal(flat, recs[: 3 * 256])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=700), st.integers(min_value=2, max_value=64))
    def test_flatten_prefix_property(self, n, wlen):
        recs = make_records(n)
        seqs = window(recs, wlen)
        assert len(seqs) == n // wlen
        if seqs:
            flat = np.concatenate([s.data for s in seqs])
            np.testing.assert_array_equal(flat, recs[: (n // wlen) * wlen])

    def test_window_len_below_two_rejected(self):
        with pytest.raises(ConfigError):
            window(make_records(10), 1)

    def test_sequence_rejects_decreasing_timestamps(self):
        recs = make_records(4)
        recs["timestamp_us"] = [3, 2, 1, 0]
        with pytest.raises(ValueError):
            Sequence(recs)

    def test_stack_sequences_shape(self):
        seqs = window(make_records(512), 256)
        assert stack_sequences(seqs).shape == (2, 256)


class TestSplit:
    def test_100_sequences_fraction_quarter(self):
        seqs = window(make_records(100 * 8), 8)
        ev, va = split(seqs, SplitSpec(valid_fraction=0.25, seed=7))
        assert (len(ev), len(va)) == (75, 25)

    def test_same_seed_identical(self):
        seqs = window(make_records(80), 8)
        a = split(seqs, SplitSpec(seed=3))
        b = split(seqs, SplitSpec(seed=3))
        assert [id(s) for s in a[0]] == [id(s) for s in b[0]]
        assert [id(s) for s in a[1]] == [id(s) for s in b[1]]

    def test_8_sequences_give_6_2(self):
        seqs = window(make_records(64), 8)
        ev, va = split(seqs, SplitSpec(valid_fraction=0.25, seed=0))
        assert (len(ev), len(va)) == (6, 2)

    def test_partition_is_exact(self):
        seqs = window(make_records(30 * 4), 4)
        ev, va = split(seqs, SplitSpec(valid_fraction=0.4, seed=1))
        assert len(ev) + len(va) == len(seqs)
        assert {id(s) for s in ev} | {id(s) for s in va} == {id(s) for s in seqs}
        assert {id(s) for s in ev} & {id(s) for s in va} == set()

    def test_fewer_than_four_rejected(self):
        seqs = window(make_records(24), 8)
        with pytest.raises(ValueError):
            split(seqs, SplitSpec())

    def test_bad_fraction_rejected(self):
        with pytest.raises(ConfigError):
            SplitSpec(valid_fraction=1.0)
