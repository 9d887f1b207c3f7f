"""Typed system-event records and log ingestion.

Wire formats
------------
JSONL (primary), one record per line::

    {"ts":<int>,"src_id":<str>,"src_kind":"P|F|I","src_name":<str>,
     "dst_id":<str>,"dst_kind":"P|F|I","dst_name":<str>,
     "rel":"fork|access|connect","host":<str>}

CSV (secondary): the same nine fields in the order
``ts,src_id,src_kind,src_name,dst_id,dst_kind,dst_name,rel,host``,
header row required, RFC-4180 quoting.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from .errors import MalformedRecord, MissingField, NotAProcess, SchemaViolation


class EntityKind(str, Enum):
    PROCESS = "P"
    FILE = "F"
    SOCKET = "I"


class RelationKind(str, Enum):
    FORK = "fork"
    FILE_ACCESS = "access"
    SOCKET_CONNECT = "connect"


#: Required destination kind for each relation; source is always a process.
RELATION_DST_KIND = {
    RelationKind.FORK: EntityKind.PROCESS,
    RelationKind.FILE_ACCESS: EntityKind.FILE,
    RelationKind.SOCKET_CONNECT: EntityKind.SOCKET,
}

CSV_FIELDS = [
    "ts", "src_id", "src_kind", "src_name",
    "dst_id", "dst_kind", "dst_name", "rel", "host",
]


@dataclass(frozen=True)
class SystemEntity:
    """One monitored system entity (process, file, or inet socket)."""

    entity_id: str
    kind: EntityKind
    display_name: str
    host: str


@dataclass(frozen=True)
class SystemEvent:
    """One provenance record: process ``src`` acting on ``dst``."""

    timestamp: int
    src: SystemEntity
    dst: SystemEntity
    relation: RelationKind


@dataclass
class IngestReport:
    """Accepted/rejected counts for one ingestion run; mergeable."""

    total: int = 0
    accepted: int = 0
    malformed: int = 0
    missing_field: int = 0
    schema_violation: int = 0
    warnings: list = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return self.malformed + self.missing_field + self.schema_violation

    def merge(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(
            total=self.total + other.total,
            accepted=self.accepted + other.accepted,
            malformed=self.malformed + other.malformed,
            missing_field=self.missing_field + other.missing_field,
            schema_violation=self.schema_violation + other.schema_violation,
            warnings=self.warnings + other.warnings,
        )

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "malformed": self.malformed,
            "missing_field": self.missing_field,
            "schema_violation": self.schema_violation,
            "warnings": list(self.warnings),
        }


def _validate_kind(raw: str, field_name: str) -> EntityKind:
    try:
        return EntityKind(raw)
    except ValueError:
        raise SchemaViolation(f"{field_name}: unknown entity kind {raw!r}")


def _build_event(rec: dict) -> SystemEvent:
    for name in CSV_FIELDS:
        if name not in rec or rec[name] in (None, ""):
            raise MissingField(f"missing field {name!r}")

    ts_raw = rec["ts"]
    try:
        ts = int(ts_raw)
    except (TypeError, ValueError):
        raise MalformedRecord(f"ts is not an integer: {ts_raw!r}")
    if isinstance(ts_raw, float) and ts_raw != ts:
        raise MalformedRecord(f"ts is not an integer: {ts_raw!r}")
    if ts < 0:
        raise SchemaViolation(f"negative timestamp {ts}")

    src_kind = _validate_kind(str(rec["src_kind"]), "src_kind")
    dst_kind = _validate_kind(str(rec["dst_kind"]), "dst_kind")
    try:
        rel = RelationKind(str(rec["rel"]))
    except ValueError:
        raise SchemaViolation(f"unknown relation {rec['rel']!r}")

    if src_kind is not EntityKind.PROCESS:
        raise SchemaViolation(f"source of {rel.value!r} must be a process, got {src_kind.value}")
    if dst_kind is not RELATION_DST_KIND[rel]:
        raise SchemaViolation(
            f"relation {rel.value!r} requires destination kind "
            f"{RELATION_DST_KIND[rel].value}, got {dst_kind.value}"
        )

    host = str(rec["host"]).strip().lower()
    src = SystemEntity(str(rec["src_id"]), src_kind, str(rec["src_name"]).strip(), host)
    dst = SystemEntity(str(rec["dst_id"]), dst_kind, str(rec["dst_name"]).strip(), host)
    return SystemEvent(timestamp=ts, src=src, dst=dst, relation=rel)


def parse_event_line(line: str, format: str = "jsonl") -> SystemEvent:
    """Parse one record in the documented wire format into a SystemEvent."""
    if format == "jsonl":
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc}")
        if not isinstance(rec, dict):
            raise MalformedRecord("JSONL record must be an object")
    elif format == "csv":
        try:
            rows = list(csv.reader(io.StringIO(line)))
        except csv.Error as exc:
            raise MalformedRecord(f"invalid CSV: {exc}")
        if not rows or len(rows[0]) != len(CSV_FIELDS):
            raise MalformedRecord(f"expected {len(CSV_FIELDS)} CSV fields")
        rec = dict(zip(CSV_FIELDS, rows[0]))
    else:
        raise ValueError(f"unknown format {format!r}")
    return _build_event(rec)


def serialize_event(event: SystemEvent) -> str:
    """Render an event back to its JSONL wire form."""
    return json.dumps(
        {
            "ts": event.timestamp,
            "src_id": event.src.entity_id,
            "src_kind": event.src.kind.value,
            "src_name": event.src.display_name,
            "dst_id": event.dst.entity_id,
            "dst_kind": event.dst.kind.value,
            "dst_name": event.dst.display_name,
            "rel": event.relation.value,
            "host": event.src.host,
        },
        sort_keys=True,
    )


def canonicalize_program_id(entity: SystemEntity) -> str:
    """Stable program key: lowercased executable base name."""
    if entity.kind is not EntityKind.PROCESS:
        raise NotAProcess(f"{entity.entity_id} is a {entity.kind.value}, not a process")
    name = entity.display_name.replace("\\", "/").rstrip("/")
    return name.rsplit("/", 1)[-1].lower()


def ingest_stream(
    source: Iterable[str], format: str = "jsonl"
) -> tuple[list[SystemEvent], IngestReport]:
    """Parse a line sequence, keeping order; per-record errors go to the report.

    A CSV header row (exact field names) is treated as metadata and not
    counted in the report totals.
    """
    events: list[SystemEvent] = []
    report = IngestReport()
    for lineno, line in enumerate(source):
        stripped = line.strip("\r\n")
        if not stripped:
            continue
        if format == "csv" and lineno == 0 and stripped == ",".join(CSV_FIELDS):
            continue
        report.total += 1
        try:
            events.append(parse_event_line(stripped, format=format))
            report.accepted += 1
        except MissingField:
            report.missing_field += 1
        except SchemaViolation:
            report.schema_violation += 1
        except MalformedRecord:
            report.malformed += 1
    return events, report


def read_events(path: str, format: str = "jsonl") -> tuple[list[SystemEvent], IngestReport]:
    from .errors import IoFailure

    try:
        with open(path, "r", encoding="utf-8") as fh:
            return ingest_stream(fh, format=format)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}")


def write_events(events: Iterator[SystemEvent], path: str) -> None:
    from .errors import IoFailure

    try:
        with open(path, "w", encoding="utf-8") as fh:
            for ev in events:
                fh.write(serialize_event(ev) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}")
