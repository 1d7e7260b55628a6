"""Replay of monitoring logs stored as ASCII files.

A log directory holds a map file and one or more data files::

    kieker.map       $0=kieker.common.record.controlflow.OperationExecutionRecord
    kieker-0.dat     $0;1700000000000200000;public void a.B.c();s1;7;1700000000000100000;...

Each data line is ``$<type>;<loggingTimestamp>;<field>;...`` with the
record's fields in declaration order. Strings are written verbatim and
therefore must not contain ``;`` or line breaks.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import socket
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from ..errors import ParseError
from ..records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    MonitoringRecord,
    OperationExecutionRecord,
    StringRegistry,
    TraceMetadataRecord,
)
from ..wire import encode_frame

log = logging.getLogger(__name__)

RECORD_TYPE_NAMES = {
    OperationExecutionRecord: "kieker.common.record.controlflow.OperationExecutionRecord",
    BeforeOperationEvent: "kieker.common.record.flow.trace.operation.BeforeOperationEvent",
    AfterOperationEvent: "kieker.common.record.flow.trace.operation.AfterOperationEvent",
    TraceMetadataRecord: "kieker.common.record.flow.trace.TraceMetadata",
}
_TYPES_BY_NAME: dict[str, type] = {}
for _cls, _name in RECORD_TYPE_NAMES.items():
    _TYPES_BY_NAME[_name] = _cls
    _TYPES_BY_NAME[_name.rpartition(".")[2]] = _cls
    _TYPES_BY_NAME[_cls.__name__] = _cls

_FIELD_TYPES = {
    cls: tuple((f.name, int if f.type in ("int", int) else str) for f in dataclasses.fields(cls))
    for cls in RECORD_TYPE_NAMES
}

MAP_FILE = "kieker.map"


@dataclass
class ReplayReport:
    sent: int = 0
    lines: int = 0
    files: int = 0
    bytes_sent: int = 0
    elapsed_s: float = 0.0


def _format_field(value) -> str:
    text = str(value)
    if ";" in text or "\n" in text or "\r" in text:
        raise ValueError(f"field {text!r} cannot be stored in the ASCII log format")
    return text


def write_log(records: Iterable[MonitoringRecord], directory: os.PathLike | str, records_per_file: int = 0) -> list[Path]:
    """Store *records* as a map file plus data files; return the data files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    type_ids: dict[type, int] = {}
    dat_files: list[Path] = []
    out = None
    written = 0
    try:
        for record in records:
            if out is None or (records_per_file and written >= records_per_file):
                if out is not None:
                    out.close()
                path = directory / f"kieker-{len(dat_files)}.dat"
                dat_files.append(path)
                out = path.open("w", encoding="utf-8")
                written = 0
            cls = type(record)
            if cls not in type_ids:
                type_ids[cls] = len(type_ids)
            values = [getattr(record, name) for name, _ in _FIELD_TYPES[cls]]
            out.write(f"${type_ids[cls]};" + ";".join(_format_field(v) for v in values) + "\n")
            written += 1
    finally:
        if out is not None:
            out.close()
    with (directory / MAP_FILE).open("w", encoding="utf-8") as f:
        for cls, n in type_ids.items():
            f.write(f"${n}={RECORD_TYPE_NAMES[cls]}\n")
    return dat_files


def read_map(path: os.PathLike | str) -> dict[str, type]:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            key, sep, type_name = line.partition("=")
            if not sep or not key.startswith("$") or not key[1:].isdigit():
                raise ParseError(path, lineno, f"expected '$<n>=<record-type>', got {line!r}")
            cls = _TYPES_BY_NAME.get(type_name.strip())
            if cls is None:
                raise ParseError(path, lineno, f"unsupported record type {type_name.strip()!r}")
            mapping[key] = cls
    return mapping


def parse_line(line: str, mapping: dict[str, type], path="<input>", lineno: int = 0) -> MonitoringRecord:
    parts = line.rstrip("\r\n").split(";")
    cls = mapping.get(parts[0])
    if cls is None:
        raise ParseError(path, lineno, f"unknown record type key {parts[0]!r}")
    fields = _FIELD_TYPES[cls]
    if len(parts) - 1 != len(fields):
        raise ParseError(path, lineno, f"{cls.__name__} needs {len(fields)} fields, got {len(parts) - 1}")
    values = []
    for (name, kind), raw in zip(fields, parts[1:]):
        if kind is int:
            try:
                values.append(int(raw))
            except ValueError:
                raise ParseError(path, lineno, f"field {name}: not an integer: {raw!r}") from None
        else:
            values.append(raw)
    return cls(*values)


def read_log(map_file, dat_files) -> Iterator[MonitoringRecord]:
    mapping = read_map(map_file)
    for path in dat_files:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if line.strip():
                    yield parse_line(line, mapping, path, lineno)


def log_files(directory: os.PathLike | str) -> tuple[Path, list[Path]]:
    """Locate the map file and data files (sorted by index) of a log directory."""
    directory = Path(directory)
    dat = sorted(directory.glob("*.dat"), key=lambda p: (len(p.name), p.name))
    return directory / MAP_FILE, dat


def replay_log(
    map_file,
    dat_files,
    target: tuple[str, int],
    speedup: float = 1.0,
    sleep=time.sleep,
    clock=time.monotonic,
) -> ReplayReport:
    """Send a stored log to *target*, paced by its logging timestamps.

    Records are delivered with the original inter-record gaps divided by
    *speedup*; ``math.inf`` sends as fast as possible. On a malformed line
    everything before it has been sent and :class:`ParseError` propagates.
    """
    if not speedup > 0:
        raise ValueError("speedup must be positive")
    paced = not math.isinf(speedup)
    report = ReplayReport(files=len(dat_files))
    registry = StringRegistry()
    started = clock()
    first_ts: int | None = None
    pending: list[bytes] = []

    def flush(sock) -> None:
        if pending:
            data = b"".join(pending)
            sock.sendall(data)
            report.bytes_sent += len(data)
            pending.clear()

    with socket.create_connection(target) as sock:
        try:
            for record in read_log(map_file, dat_files):
                report.lines += 1
                if paced:
                    if first_ts is None:
                        first_ts = record.logging_timestamp
                    due = started + (record.logging_timestamp - first_ts) / 1e9 / speedup
                    wait = due - clock()
                    if wait > 0:
                        flush(sock)
                        sleep(wait)
                pending.append(encode_frame(record, registry))
                report.sent += 1
                if len(pending) >= 256:
                    flush(sock)
        finally:
            flush(sock)
    report.elapsed_s = clock() - started
    return report
