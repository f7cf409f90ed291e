import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracelm.errors import ConfigError, JsonlParseError
from tracelm.events import (
    MASK_TOKEN,
    PAD_TOKEN,
    RECORD_DTYPE,
    UNK_ID,
    UNK_TOKEN,
    Event,
    EventRecord,
    RetClass,
    Vocab,
    array_to_records,
    build_vocab,
    encode_event,
    encode_events,
    jsonl_dumps,
    read_jsonl,
    records_to_array,
    ret_simplify,
    write_jsonl,
)


def make_event(**kw):
    base = dict(
        timestamp_ns=1000,
        hostname="web1",
        cpu_id=0,
        procname="apache2",
        pid=10,
        tid=11,
        sysname="read",
        entry=False,
        ret=0,
        extra_args={},
    )
    base.update(kw)
    return Event(**base)


class TestRetSimplify:
    def test_zero_is_success(self):
        assert ret_simplify(0) is RetClass.SUCCESS

    def test_negative_is_failure(self):
        assert ret_simplify(-11) is RetClass.FAILURE

    def test_absent_is_unavailable(self):
        assert ret_simplify(None) is RetClass.UNAVAILABLE

    @given(st.one_of(st.none(), st.integers(min_value=-(2**62), max_value=2**62)))
    def test_total_and_image(self, ret):
        assert ret_simplify(ret) in {RetClass.SUCCESS, RetClass.FAILURE, RetClass.UNAVAILABLE}


class TestEventInvariants:
    def test_entry_with_ret_rejected(self):
        with pytest.raises(ValueError):
            make_event(entry=True, ret=5)

    def test_exit_without_ret_rejected(self):
        with pytest.raises(ValueError):
            make_event(entry=False, ret=None)

    def test_negative_timestamp_rejected(self):
        with pytest.raises(ValueError):
            make_event(timestamp_ns=-1)

    def test_whitespace_sysname_rejected(self):
        with pytest.raises(ValueError):
            make_event(sysname="bad name")


class TestVocab:
    def test_build_orders_by_count_then_name(self):
        corpus = ["read"] * 5 + ["open"] * 2 + ["rare"]
        v = build_vocab(corpus, min_count=2)
        assert v.tokens == [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, "read", "open"]

    def test_empty_corpus_keeps_reserved_only(self):
        v = build_vocab([], min_count=1)
        assert v.tokens == [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN]

    def test_below_min_count_looks_up_as_unk(self):
        corpus = ["read"] * 5 + ["open"] * 2 + ["rare"]
        v = build_vocab(corpus, min_count=2)
        assert v.id("rare") == UNK_ID == 1

    def test_count_ties_break_lexicographically(self):
        v = build_vocab(["b", "a", "b", "a", "c"], min_count=1)
        assert v.tokens[3:] == ["a", "b", "c"]

    def test_deterministic_across_orderings(self):
        a = build_vocab(["x", "y", "y", "z"], 1)
        b = build_vocab(["y", "z", "x", "y"], 1)
        assert a == b

    def test_roundtrip_token_of_id(self):
        v = build_vocab(["read", "read", "open"], 1)
        for i, tok in enumerate(v.tokens):
            assert v.id(tok) == i
            assert v.token(i) == tok

    def test_min_count_zero_rejected(self):
        with pytest.raises(ConfigError):
            build_vocab(["a"], min_count=0)

    def test_save_load(self, tmp_path):
        v = build_vocab(["read", "open", "read"], 1)
        v.save(tmp_path / "v.json")
        assert Vocab.load(tmp_path / "v.json") == v


class TestEncodeEvent:
    def setup_method(self):
        self.sys_vocab = build_vocab(["read", "open"], 1)
        self.proc_vocab = build_vocab(["apache2"], 1)

    def test_truncates_timestamp_and_simplifies_ret(self):
        e = make_event(sysname="read", entry=False, ret=42, timestamp_ns=1500)
        r = encode_event(e, self.sys_vocab, self.proc_vocab)
        assert r.ret_class is RetClass.SUCCESS
        assert r.timestamp_us == 1

    def test_unseen_sysname_maps_to_unk(self):
        e = make_event(sysname="neverseen")
        r = encode_event(e, self.sys_vocab, self.proc_vocab)
        assert r.sysname_id == UNK_ID

    def test_entry_event_has_unavailable_ret(self):
        e = make_event(entry=True, ret=None)
        r = encode_event(e, self.sys_vocab, self.proc_vocab)
        assert r.ret_class is RetClass.UNAVAILABLE

    def test_array_fast_path_matches_object_path(self):
        events = [
            make_event(sysname="read", ret=-2, timestamp_ns=2999),
            make_event(sysname="open", entry=True, ret=None, procname="mysqld"),
            make_event(sysname="wat", pid=7, tid=8),
        ]
        arr = encode_events(events, self.sys_vocab, self.proc_vocab)
        recs = [encode_event(e, self.sys_vocab, self.proc_vocab) for e in events]
        assert arr.dtype == RECORD_DTYPE
        np.testing.assert_array_equal(arr, records_to_array(recs))
        assert array_to_records(arr) == recs


hostnames = st.from_regex(r"[a-z][a-z0-9.-]{0,10}", fullmatch=True)


def event_strategy():
    names = st.from_regex(r"[a-z_][a-z0-9_]{0,12}", fullmatch=True)
    arg_values = st.text(
        alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=12
    ).filter(lambda s: '"' not in s)
    extra = st.dictionaries(names, arg_values, max_size=3)
    entry = st.booleans()
    return st.builds(
        lambda ts, host, cpu, proc, pid, tid, sysname, is_entry, ret, args: Event(
            timestamp_ns=ts,
            hostname=host,
            cpu_id=cpu,
            procname=proc,
            pid=pid,
            tid=tid,
            sysname=sysname,
            entry=is_entry,
            ret=None if is_entry else ret,
            extra_args=args,
        ),
        st.integers(min_value=0, max_value=10**15),
        hostnames,
        st.integers(min_value=0, max_value=63),
        names,
        st.integers(min_value=0, max_value=2**22),
        st.integers(min_value=0, max_value=2**22),
        names,
        entry,
        st.integers(min_value=-(2**31), max_value=2**31),
        extra,
    )


class TestJsonl:
    def test_roundtrip_three_events(self):
        events = [
            make_event(),
            make_event(entry=True, ret=None, extra_args={"fd": "3", "path": "/etc/x"}),
            make_event(sysname="futex", ret=-11, timestamp_ns=999999),
        ]
        assert list(read_jsonl(io.StringIO(jsonl_dumps(events)))) == events

    def test_malformed_line_names_line_number(self):
        good = jsonl_dumps([make_event()]).rstrip("\n")
        lines = [good] * 6 + ["not json"]
        with pytest.raises(JsonlParseError) as exc:
            list(read_jsonl(iter(line + "\n" for line in lines)))
        assert exc.value.line_no == 7
        assert exc.value.text == "not json"

    def test_empty_extra_args_restored_empty(self):
        e = make_event(extra_args={})
        (back,) = read_jsonl(io.StringIO(jsonl_dumps([e])))
        assert back.extra_args == {}

    def test_ret_is_null_on_entry(self):
        e = make_event(entry=True, ret=None)
        obj = json.loads(jsonl_dumps([e]))
        assert obj["ret"] is None
        assert list(obj.keys()) == [
            "ts_ns", "host", "cpu", "procname", "pid", "tid", "sysname", "entry", "ret", "args",
        ]

    def test_wrong_keys_rejected(self):
        with pytest.raises(JsonlParseError) as exc:
            list(read_jsonl(io.StringIO('{"ts_ns": 1}\n')))
        assert exc.value.line_no == 1

    def test_file_roundtrip(self, tmp_path):
        events = [make_event(timestamp_ns=i * 10) for i in range(5)]
        path = tmp_path / "t.jsonl"
        assert write_jsonl(events, path) == 5
        assert list(read_jsonl(path)) == events

    @settings(max_examples=150, deadline=None)
    @given(st.lists(event_strategy(), max_size=8))
    def test_roundtrip_property(self, events):
        back = list(read_jsonl(io.StringIO(jsonl_dumps(events))))
        assert back == events
        for orig, new in zip(events, back):
            assert list(orig.extra_args.items()) == list(new.extra_args.items())
