"""Knowledge bases: consumer context (snapshots + event streams), the provider
catalog, and the append-only reconfiguration trace.

Time is a logical integer tick. The trace is newline-delimited JSON with
canonical key order; configuration digests are SHA-256 over the canonical
configuration serialization, which makes a trace replayable and verifiable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .actions import Action, action_from_doc, action_to_doc, apply_actions
from .common import (
    AttrValue,
    DocumentError,
    canonical_json,
    is_attr_value,
    load_json_file,
    load_json_text,
    take_keys,
)
from .feature_model import Configuration, FeatureModel, parse_feature_model
from .goal_model import ContextPredicate, parse_predicate


class OutOfOrderEventError(ValueError):
    """An event carried a tick older than the snapshot it was applied to."""


class TraceStorageError(RuntimeError):
    """Appending to the trace log failed; in-memory loop state is unaffected."""


class TraceFormatError(DocumentError):
    """A trace line could not be decoded; names the offending line number."""


@dataclass(frozen=True)
class ContextSnapshot:
    """Consumer state at a tick: dotted paths under user.*, device.* and
    situation.* mapped to scalar values."""

    timestamp: int
    dimensions: Mapping[str, AttrValue] = field(default_factory=dict)


@dataclass(frozen=True)
class ContextEvent:
    tick: int
    path: str
    value: AttrValue


def apply_event(snapshot: ContextSnapshot, ev: ContextEvent) -> ContextSnapshot:
    """New snapshot with the event's path overwritten and the timestamp advanced."""
    if ev.tick < snapshot.timestamp:
        raise OutOfOrderEventError(
            f"event at tick {ev.tick} is older than snapshot at tick {snapshot.timestamp}"
        )
    dimensions = dict(snapshot.dimensions)
    dimensions[ev.path] = ev.value
    return ContextSnapshot(timestamp=ev.tick, dimensions=dimensions)


def preprocess_events(stream: Sequence[ContextEvent]) -> tuple[ContextEvent, ...]:
    """Drop no-op deltas: an event whose value equals the previous surviving
    value on the same path. Idempotent, order preserving."""
    for earlier, later in zip(stream, stream[1:]):
        if later.tick < earlier.tick:
            raise ValueError(f"event stream not sorted by tick at tick {later.tick}")
    last_value: dict[str, AttrValue] = {}
    out: list[ContextEvent] = []
    for ev in stream:
        if ev.path in last_value and last_value[ev.path] == ev.value and type(last_value[ev.path]) is type(ev.value):
            continue
        last_value[ev.path] = ev.value
        out.append(ev)
    return tuple(out)


def parse_events(doc: Union[str, Any], *, source: str = "event stream") -> tuple[ContextEvent, ...]:
    if isinstance(doc, str):
        doc = load_json_text(doc, source=source)
    if not isinstance(doc, list):
        raise DocumentError(f"{source}: expected a JSON array of events")
    events: list[ContextEvent] = []
    for node in doc:
        obj = take_keys(node, ["tick", "path", "value"], where=f"{source}: event")
        tick, path, value = obj["tick"], obj["path"], obj["value"]
        if not isinstance(tick, int) or isinstance(tick, bool) or tick < 0:
            raise DocumentError(f"{source}: event tick must be a non-negative integer")
        if not isinstance(path, str) or not path:
            raise DocumentError(f"{source}: event path must be a non-empty string")
        if not is_attr_value(value):
            raise DocumentError(f"{source}: event value must be int or str ({path})")
        events.append(ContextEvent(tick=tick, path=path, value=value))
    for earlier, later in zip(events, events[1:]):
        if later.tick < earlier.tick:
            raise DocumentError(f"{source}: events not sorted by tick (tick {later.tick})")
    return tuple(events)


def load_catalog(directory: Union[str, Path]) -> list[FeatureModel]:
    """Parse every *.json feature model in a directory, sorted by model_id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DocumentError(f"not a directory: {directory}")
    models = []
    for path in sorted(directory.glob("*.json")):
        models.append(parse_feature_model(load_json_file(path), source=str(path)))
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})[0]
        raise DocumentError(f"duplicate model_id in catalog: {dup}")
    return sorted(models, key=lambda m: m.model_id)


# ---------------------------------------------------------------------------
# Reconfiguration trace


class Outcome(str, Enum):
    APPLIED = "applied"
    REJECTED_INVALID = "rejected_invalid"
    FAILED_EXECUTION = "failed_execution"


@dataclass(frozen=True)
class TraceEntry:
    seq: int
    tick: int
    condition: ContextPredicate
    plan_actions: tuple[Action, ...]
    pre_config_digest: str
    post_config_digest: str
    outcome: Outcome
    provider_id: str


def trace_entry_to_doc(entry: TraceEntry) -> dict:
    return {
        "seq": entry.seq,
        "tick": entry.tick,
        "condition": entry.condition.to_text(),
        "plan_actions": [action_to_doc(a) for a in entry.plan_actions],
        "pre_config_digest": entry.pre_config_digest,
        "post_config_digest": entry.post_config_digest,
        "outcome": entry.outcome.value,
        "provider_id": entry.provider_id,
    }


def trace_entry_from_doc(doc: Any, *, source: str = "trace entry") -> TraceEntry:
    obj = take_keys(
        doc,
        [
            "seq",
            "tick",
            "condition",
            "plan_actions",
            "pre_config_digest",
            "post_config_digest",
            "outcome",
            "provider_id",
        ],
        where=source,
    )
    try:
        outcome = Outcome(obj["outcome"])
    except ValueError:
        raise DocumentError(f"{source}: unknown outcome: {obj['outcome']}") from None
    return TraceEntry(
        seq=obj["seq"],
        tick=obj["tick"],
        condition=parse_predicate(obj["condition"], source=source),
        plan_actions=tuple(action_from_doc(a, source=source) for a in obj["plan_actions"]),
        pre_config_digest=obj["pre_config_digest"],
        post_config_digest=obj["post_config_digest"],
        outcome=outcome,
        provider_id=obj["provider_id"],
    )


class TraceLog:
    """Single-writer, append-only JSONL trace file.

    Opening in append mode resumes the sequence at line-count + 1; the fresh
    mode truncates so repeated simulation runs are byte-identical.
    """

    def __init__(self, path: Union[str, Path], *, append: bool = True):
        self.path = Path(path)
        if append and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                self._seq = sum(1 for line in fh if line.strip())
        else:
            self.path.write_text("", encoding="utf-8")
            self._seq = 0

    @property
    def last_seq(self) -> int:
        return self._seq

    def record(self, entry: TraceEntry) -> int:
        """Append the entry with the next sequence number; returns it."""
        seq = self._seq + 1
        line = canonical_json(trace_entry_to_doc(replace(entry, seq=seq)))
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
        except OSError as exc:
            raise TraceStorageError(f"cannot append to trace log {self.path}: {exc}") from exc
        self._seq = seq
        return seq


def record_trace(log: TraceLog, entry: TraceEntry) -> int:
    return log.record(entry)


def query_trace(
    log: Union[TraceLog, str, Path], entry_filter: Optional[ContextPredicate] = None
) -> list[TraceEntry]:
    """Entries in seq order matching the filter; a corrupt line is an error
    naming the line number, never a silent skip."""
    path = log.path if isinstance(log, TraceLog) else Path(log)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace log: {exc.strerror}", source=str(path)) from exc
    entries: list[TraceEntry] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            entry = trace_entry_from_doc(doc, source=f"{path}:{lineno}")
        except (json.JSONDecodeError, DocumentError) as exc:
            raise TraceFormatError(f"corrupt trace line {lineno}: {exc}", source=str(path)) from exc
        if entry_filter is None or entry_filter.evaluate(_entry_fields(entry)):
            entries.append(entry)
    return entries


def _entry_fields(entry: TraceEntry) -> Mapping[str, AttrValue]:
    return {
        "seq": entry.seq,
        "tick": entry.tick,
        "condition": entry.condition.to_text(),
        "pre_config_digest": entry.pre_config_digest,
        "post_config_digest": entry.post_config_digest,
        "outcome": entry.outcome.value,
        "provider_id": entry.provider_id,
    }


def replay_trace(initial: Configuration, entries: Iterable[TraceEntry]) -> Configuration:
    """Fold the plan actions of every applied entry over the initial
    configuration, in seq order."""
    cfg = initial
    for entry in sorted(entries, key=lambda e: e.seq):
        if entry.outcome is Outcome.APPLIED:
            cfg = apply_actions(cfg, entry.plan_actions)
    return cfg
