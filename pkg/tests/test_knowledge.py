from __future__ import annotations

import dataclasses
import json
import random

import pytest

from cloudline.feature_model import Configuration, config_digest
from cloudline.actions import Deselect, Select, SetAttribute
from cloudline.goal_model import parse_predicate
from cloudline.knowledge import (
    ContextEvent,
    ContextSnapshot,
    Outcome,
    OutOfOrderEventError,
    TraceEntry,
    TraceFormatError,
    TraceLog,
    apply_event,
    load_catalog,
    parse_events,
    preprocess_events,
    query_trace,
    record_trace,
    replay_trace,
    trace_entry_from_doc,
    trace_entry_to_doc,
)


def entry(seq=0, tick=5, outcome=Outcome.APPLIED, actions=(Deselect("SaveHistoricDoc"),)):
    return TraceEntry(
        seq=seq,
        tick=tick,
        condition=parse_predicate("device.battery == Low"),
        plan_actions=tuple(actions),
        pre_config_digest="aa",
        post_config_digest="bb",
        outcome=outcome,
        provider_id="MediCloud",
    )


# ---------------------------------------------------------------------------
# Context events


def test_apply_event_overwrites_and_advances():
    snapshot = ContextSnapshot(timestamp=3, dimensions={"device.battery": "Normal"})
    after = apply_event(snapshot, ContextEvent(tick=5, path="device.battery", value="Low"))
    assert after.dimensions == {"device.battery": "Low"}
    assert after.timestamp == 5
    assert snapshot.dimensions == {"device.battery": "Normal"}


def test_apply_event_fresh_path():
    after = apply_event(ContextSnapshot(timestamp=0), ContextEvent(1, "user.lang", "en"))
    assert after.dimensions == {"user.lang": "en"}


def test_apply_event_out_of_order():
    snapshot = ContextSnapshot(timestamp=9)
    with pytest.raises(OutOfOrderEventError):
        apply_event(snapshot, ContextEvent(tick=5, path="x", value=1))


def test_preprocess_drops_noop_deltas():
    stream = (
        ContextEvent(1, "device.battery", "Low"),
        ContextEvent(2, "device.battery", "Low"),
        ContextEvent(3, "device.battery", "Normal"),
    )
    out = preprocess_events(stream)
    assert [(e.tick, e.value) for e in out] == [(1, "Low"), (3, "Normal")]


def test_preprocess_empty_and_alternating():
    assert preprocess_events(()) == ()
    stream = (
        ContextEvent(1, "p", "a"),
        ContextEvent(2, "p", "b"),
        ContextEvent(3, "p", "a"),
    )
    assert preprocess_events(stream) == stream


def test_preprocess_idempotent_and_snapshot_equivalent():
    rng = random.Random(314)
    paths = ["a", "b", "c"]
    for _ in range(100):
        stream = []
        tick = 0
        for _ in range(rng.randint(0, 12)):
            tick += rng.randint(0, 2)
            stream.append(ContextEvent(tick, rng.choice(paths), rng.choice(["x", "y", 1])))
        stream = tuple(stream)
        once = preprocess_events(stream)
        assert preprocess_events(once) == once

        def fold(events):
            snapshot = ContextSnapshot(timestamp=0)
            for ev in events:
                snapshot = apply_event(snapshot, ev)
            return snapshot.dimensions

        assert fold(stream) == fold(once)


def test_preprocess_rejects_unsorted():
    with pytest.raises(ValueError, match="not sorted"):
        preprocess_events((ContextEvent(5, "a", 1), ContextEvent(3, "a", 2)))


def test_parse_events_validates(tmp_path):
    events = parse_events('[{"tick": 1, "path": "a", "value": 2}]')
    assert events == (ContextEvent(1, "a", 2),)
    with pytest.raises(Exception, match="not sorted"):
        parse_events('[{"tick": 2, "path": "a", "value": 1}, {"tick": 1, "path": "a", "value": 1}]')
    with pytest.raises(Exception, match="int or str"):
        parse_events('[{"tick": 1, "path": "a", "value": 1.5}]')


# ---------------------------------------------------------------------------
# Trace log


def test_record_assigns_sequence(tmp_path):
    log = TraceLog(tmp_path / "t.jsonl", append=False)
    assert record_trace(log, entry()) == 1
    assert record_trace(log, entry()) == 2
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[1])["seq"] == 2


def test_record_resumes_after_reopen(tmp_path):
    path = tmp_path / "t.jsonl"
    log = TraceLog(path, append=False)
    for _ in range(5):
        record_trace(log, entry())
    reopened = TraceLog(path)
    assert record_trace(reopened, entry()) == 6


def test_query_round_trips_entries(tmp_path):
    path = tmp_path / "t.jsonl"
    log = TraceLog(path, append=False)
    e = entry(actions=(Select("X"), SetAttribute("X", "ram", 4), Deselect("Y")))
    record_trace(log, e)
    got = query_trace(path)
    assert len(got) == 1
    assert got[0] == dataclasses.replace(e, seq=1)


def test_query_filter(tmp_path):
    path = tmp_path / "t.jsonl"
    log = TraceLog(path, append=False)
    record_trace(log, entry(outcome=Outcome.APPLIED))
    record_trace(log, entry(outcome=Outcome.REJECTED_INVALID))
    got = query_trace(path, parse_predicate("outcome == applied"))
    assert [e.seq for e in got] == [1]
    assert query_trace(path, parse_predicate("seq >= 2")) == query_trace(path)[1:]


def test_query_empty_log(tmp_path):
    path = tmp_path / "t.jsonl"
    TraceLog(path, append=False)
    assert query_trace(path) == []


def test_query_corrupt_line_names_lineno(tmp_path):
    path = tmp_path / "t.jsonl"
    log = TraceLog(path, append=False)
    record_trace(log, entry())
    with path.open("a") as fh:
        fh.write("{broken\n")
    with pytest.raises(TraceFormatError, match="line 2"):
        query_trace(path)


def test_trace_entry_doc_round_trip():
    e = entry(seq=3, actions=(Select("A"), SetAttribute("A", "cost", 2)))
    assert trace_entry_from_doc(trace_entry_to_doc(e)) == e


def test_replay_folds_applied_entries_only():
    initial = Configuration(model_id="m", selected=frozenset({"root", "X"}))
    entries = [
        entry(seq=1, actions=(Deselect("X"),), outcome=Outcome.APPLIED),
        entry(seq=2, actions=(Select("Y"),), outcome=Outcome.REJECTED_INVALID),
        entry(seq=3, actions=(Select("Z"),), outcome=Outcome.APPLIED),
    ]
    final = replay_trace(initial, entries)
    assert final.selected == frozenset({"root", "Z"})


# ---------------------------------------------------------------------------
# Catalog


def test_load_catalog_sorted(glucose_dir):
    models = load_catalog(glucose_dir / "catalog")
    assert [m.model_id for m in models] == ["DeviceCloud", "GlucoseCloud"]


def test_load_catalog_missing_dir(tmp_path):
    with pytest.raises(Exception, match="not a directory"):
        load_catalog(tmp_path / "nope")
