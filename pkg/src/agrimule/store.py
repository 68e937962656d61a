"""Append-only telemetry log: readings, decisions, pump events, tour reports.

On disk the log is line-oriented and human-inspectable. The first line is a
header with the format version and run metadata; every following line is

    <crc16 hex> <compact json record>

where the checksum covers the json bytes. A torn final line (crash mid-write)
is dropped with a warning on reopen; offsets stay dense and strictly
increasing across reopens.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import BadRangeError, StoreIOError
from .wire import crc16

log = logging.getLogger(__name__)

FORMAT_HEADER = "agrimule-log v1"

KIND_READING = "reading"
KIND_DECISION = "decision"
KIND_PUMP = "pump_event"
KIND_TOUR = "tour_report"
KIND_OVERRIDE = "override"

KINDS = (KIND_READING, KIND_DECISION, KIND_PUMP, KIND_TOUR, KIND_OVERRIDE)


@dataclass(frozen=True)
class Record:
    offset: int
    kind: str
    at: int
    body: dict[str, Any]

    def region_id(self) -> int | None:
        return self.body.get("region_id")


def _encode_line(record: Record) -> str:
    body = json.dumps(
        {"offset": record.offset, "kind": record.kind, "at": record.at, "body": record.body},
        sort_keys=True,
        separators=(",", ":"),
    )
    return f"{crc16(body.encode()):04x} {body}\n"


def _decode_line(line: str) -> Record | None:
    """Parse one log line; None means the checksum or structure is bad."""
    parts = line.rstrip("\n").split(" ", 1)
    if len(parts) != 2 or len(parts[0]) != 4:
        return None
    crc_text, body = parts
    try:
        if int(crc_text, 16) != crc16(body.encode()):
            return None
        obj = json.loads(body)
        return Record(offset=obj["offset"], kind=obj["kind"], at=obj["at"], body=obj["body"])
    except (ValueError, KeyError, TypeError):
        return None


class TelemetryStore:
    """Single-writer append log with snapshot-consistent readers.

    path=None keeps the log purely in memory (used by high-volume protocol
    tests); a real path is durable: each append is flushed and fsynced
    before the offset is returned.
    """

    def __init__(self, path: Path | str | None, meta: dict[str, Any] | None = None, sync: bool = True):
        self.path = Path(path) if path is not None else None
        self.meta = dict(meta or {})
        self.sync = sync
        self._records: list[Record] = []
        self._fh = None
        self._lock = threading.Lock()
        self._listeners: list[Callable[[Record], None]] = []
        if self.path is not None:
            self._open_file()

    def _open_file(self) -> None:
        try:
            existing = self.path.exists() and self.path.stat().st_size > 0
            if existing:
                self.meta, self._records = read_log(self.path)
                self._truncate_torn_tail()
                self._fh = open(self.path, "a", encoding="utf-8")
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = open(self.path, "w", encoding="utf-8")
                self._fh.write(f"{FORMAT_HEADER} {json.dumps(self.meta, sort_keys=True)}\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StoreIOError(f"cannot open log {self.path}: {exc}") from exc

    def _truncate_torn_tail(self) -> None:
        """Drop a trailing unparseable line so new appends start on a clean line."""
        with open(self.path, "r+", encoding="utf-8") as fh:
            lines = fh.readlines()
            if lines and len(lines) > 1 and _decode_line(lines[-1]) is None:
                fh.seek(0)
                fh.truncate()
                fh.writelines(lines[:-1])

    @property
    def next_offset(self) -> int:
        return self._records[-1].offset + 1 if self._records else 0

    def add_listener(self, listener: Callable[[Record], None]) -> None:
        self._listeners.append(listener)

    def append(self, kind: str, body: dict[str, Any], at: int) -> int:
        """Durably append one record; returns its offset."""
        if kind not in KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        with self._lock:
            record = Record(offset=self.next_offset, kind=kind, at=at, body=body)
            if self._fh is not None:
                try:
                    self._fh.write(_encode_line(record))
                    self._fh.flush()
                    if self.sync:
                        os.fsync(self._fh.fileno())
                except OSError as exc:
                    raise StoreIOError(f"append to {self.path} failed: {exc}") from exc
            self._records.append(record)
        for listener in self._listeners:
            listener(record)
        return record.offset

    def query(
        self,
        region_id: int | None = None,
        kind: str | None = None,
        start: int | None = None,
        end: int | None = None,
    ) -> list[Record]:
        """Matching records in offset order; an empty result is valid."""
        if start is not None and end is not None and start > end:
            raise BadRangeError(f"start {start} > end {end}")
        with self._lock:
            snapshot = list(self._records)
        out = []
        for r in snapshot:
            if region_id is not None and r.region_id() != region_id:
                continue
            if kind is not None and r.kind != kind:
                continue
            if start is not None and r.at < start:
                continue
            if end is not None and r.at > end:
                continue
            out.append(r)
        return out

    def since(self, offset: int) -> list[Record]:
        with self._lock:
            return [r for r in self._records if r.offset >= offset]

    def latest(self, region_id: int) -> tuple[Record | None, Record | None]:
        """Newest Reading and Decision for the region; None means none yet."""
        reading = decision = None
        with self._lock:
            for r in self._records:
                if r.region_id() != region_id:
                    continue
                if r.kind == KIND_READING:
                    reading = r
                elif r.kind == KIND_DECISION:
                    decision = r
        return reading, decision

    def all_records(self) -> list[Record]:
        with self._lock:
            return list(self._records)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_log(path: Path | str) -> tuple[dict[str, Any], list[Record]]:
    """Load a log file: (meta, records). Bad lines are skipped with a warning."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise StoreIOError(f"cannot read log {path}: {exc}") from exc
    if not lines:
        return {}, []
    header = lines[0].rstrip("\n")
    if not header.startswith(FORMAT_HEADER):
        raise StoreIOError(f"{path} is not an agrimule log (bad header)")
    try:
        meta = json.loads(header[len(FORMAT_HEADER) :].strip() or "{}")
    except ValueError:
        raise StoreIOError(f"{path} header metadata is not valid json") from None
    records: list[Record] = []
    for lineno, line in enumerate(lines[1:], start=2):
        record = _decode_line(line)
        if record is None:
            if lineno == len(lines) and not line.endswith("\n"):
                log.warning("%s: dropping torn final line %d", path, lineno)
            else:
                log.warning("%s: skipping corrupt line %d", path, lineno)
            continue
        records.append(record)
    return meta, records
