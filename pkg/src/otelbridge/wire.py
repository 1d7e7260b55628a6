"""Binary framing codec and the multi-connection TCP ingest server.

Frame layout (all integers big-endian)::

    registry entry:  int32 -1 | int32 id | int32 len | len bytes of UTF-8
    record:          int32 classId | int64 loggingTimestamp | fields...

Record fields follow the declaration order of the record type; string
fields travel as int32 registry ids that must have been announced earlier
on the same connection.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from typing import Callable, Iterable

from .errors import (
    BindError,
    DecodeError,
    EncodingError,
    FrameTooLarge,
    MalformedUtf8,
    RegistryError,
    TruncatedStream,
    UnknownClassId,
)
from .records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    MonitoringRecord,
    OperationExecutionRecord,
    StringRegistry,
    TraceMetadataRecord,
)

log = logging.getLogger(__name__)

REGISTRY_CLASS_ID = -1
DEFAULT_PORT = 9876
DEFAULT_BUFFER_SIZE = 64 * 1024

_INT32 = struct.Struct(">i")
_REGISTRY_HEADER = struct.Struct(">iii")


@dataclass(frozen=True, slots=True)
class RegistryEntry:
    id: int
    value: str


class _NeedMoreBytes:
    __slots__ = ()

    def __repr__(self) -> str:
        return "NEED_MORE_BYTES"

    def __bool__(self) -> bool:
        return False


NEED_MORE_BYTES = _NeedMoreBytes()


@dataclass(frozen=True)
class _Layout:
    class_id: int
    record_type: type
    struct: struct.Struct
    string_fields: tuple[int, ...]  # positions in the unpacked tuple


# Position 0 of each unpacked tuple is the class id, 1 is loggingTimestamp.
_LAYOUTS = (
    _Layout(1, OperationExecutionRecord, struct.Struct(">iqiiqqqiii"), (2, 3, 7)),
    _Layout(2, BeforeOperationEvent, struct.Struct(">iqqqiii"), (5, 6)),
    _Layout(3, AfterOperationEvent, struct.Struct(">iqqqiii"), (5, 6)),
    _Layout(4, TraceMetadataRecord, struct.Struct(">iqqqiiqi"), (4, 5)),
)
_BY_CLASS_ID = {layout.class_id: layout for layout in _LAYOUTS}
_BY_TYPE = {layout.record_type: layout for layout in _LAYOUTS}


def class_id_of(record: MonitoringRecord) -> int:
    return _BY_TYPE[type(record)].class_id


def decode_frame(buffer, registry: StringRegistry, offset: int = 0):
    """Decode one frame starting at *offset*.

    Returns ``(item, consumed)`` where *item* is a record or a
    :class:`RegistryEntry` (which is also bound into *registry*). If the
    buffer only holds a prefix of a frame, returns ``(NEED_MORE_BYTES, 0)``.
    """
    available = len(buffer) - offset
    if available < 4:
        return NEED_MORE_BYTES, 0
    (class_id,) = _INT32.unpack_from(buffer, offset)

    if class_id == REGISTRY_CLASS_ID:
        if available < _REGISTRY_HEADER.size:
            return NEED_MORE_BYTES, 0
        _, id_, length = _REGISTRY_HEADER.unpack_from(buffer, offset)
        if length < 0:
            raise DecodeError(f"negative string length {length} for registry id {id_}")
        total = _REGISTRY_HEADER.size + length
        if available < total:
            return NEED_MORE_BYTES, 0
        start = offset + _REGISTRY_HEADER.size
        try:
            value = bytes(buffer[start : start + length]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedUtf8(f"registry id {id_}: {exc}") from None
        registry.bind(id_, value)
        return RegistryEntry(id_, value), total

    layout = _BY_CLASS_ID.get(class_id)
    if layout is None:
        raise UnknownClassId(class_id)
    size = layout.struct.size
    if available < size:
        return NEED_MORE_BYTES, 0
    values = list(layout.struct.unpack_from(buffer, offset))
    resolve = registry.resolve
    for pos in layout.string_fields:
        values[pos] = resolve(values[pos])
    return layout.record_type(*values[1:]), size


def frame_size_hint(buffer, offset: int = 0) -> int | None:
    """Total size of the frame at *offset*, if its header is already buffered."""
    available = len(buffer) - offset
    if available < 4:
        return None
    (class_id,) = _INT32.unpack_from(buffer, offset)
    if class_id == REGISTRY_CLASS_ID:
        if available < _REGISTRY_HEADER.size:
            return None
        return _REGISTRY_HEADER.size + _REGISTRY_HEADER.unpack_from(buffer, offset)[2]
    layout = _BY_CLASS_ID.get(class_id)
    return layout.struct.size if layout else None


def encode_registry_entry(id_: int, value: str) -> bytes:
    data = value.encode("utf-8")
    return _REGISTRY_HEADER.pack(REGISTRY_CLASS_ID, id_, len(data)) + data


def encode_frame(record: MonitoringRecord, registry: StringRegistry) -> bytes:
    """Encode *record*, prefixed by registry entries for strings not yet announced."""
    layout = _BY_TYPE[type(record)]
    values = [layout.class_id, *_fields(record)]
    prefix = []
    for pos in layout.string_fields:
        id_, created = registry.intern(values[pos])
        if created:
            prefix.append(encode_registry_entry(id_, values[pos]))
        values[pos] = id_
    try:
        body = layout.struct.pack(*values)
    except struct.error as exc:
        raise EncodingError(f"{type(record).__name__}: {exc}") from None
    if prefix:
        prefix.append(body)
        return b"".join(prefix)
    return body


def encode_stream(records: Iterable[MonitoringRecord], registry: StringRegistry | None = None) -> bytes:
    registry = StringRegistry() if registry is None else registry
    return b"".join(encode_frame(r, registry) for r in records)


def _fields(record) -> tuple:
    return tuple(getattr(record, name) for name in record.__slots__)


class FrameDecoder:
    """Incremental decoder for one byte stream (one connection).

    Bytes are fed as they arrive; complete records come out in order. The
    pending buffer is bounded: a frame that cannot fit is a decode error.
    """

    def __init__(self, registry: StringRegistry | None = None, max_buffer: int = DEFAULT_BUFFER_SIZE):
        self.registry = StringRegistry() if registry is None else registry
        self.max_buffer = max_buffer
        self._buf = bytearray()
        self.records_decoded = 0
        self.bytes_consumed = 0

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[MonitoringRecord]:
        buf = self._buf
        buf += data
        out: list[MonitoringRecord] = []
        offset = 0
        registry = self.registry
        n = len(buf)
        while offset < n:
            item, consumed = decode_frame(buf, registry, offset)
            if not consumed:
                break
            offset += consumed
            if type(item) is not RegistryEntry:
                out.append(item)
        if offset:
            del buf[:offset]
            self.bytes_consumed += offset
        if len(buf) > self.max_buffer or (frame_size_hint(buf) or 0) > self.max_buffer:
            raise FrameTooLarge(f"pending frame exceeds the {self.max_buffer}-byte buffer")
        self.records_decoded += len(out)
        return out

    def close(self) -> None:
        if self._buf:
            raise TruncatedStream(f"stream ended with {len(self._buf)} bytes of an incomplete frame")


def decode_stream(data: bytes, registry: StringRegistry | None = None) -> list[MonitoringRecord]:
    decoder = FrameDecoder(registry, max_buffer=max(len(data), DEFAULT_BUFFER_SIZE))
    out = decoder.feed(data)
    decoder.close()
    return out


# ---------------------------------------------------------------------------
# TCP ingest


class _ConnectionHandler(socketserver.BaseRequestHandler):
    server: _IngestServer

    def handle(self) -> None:
        server = self.server
        decoder = FrameDecoder(max_buffer=server.buffer_size)
        sock: socket.socket = self.request
        server.track(sock, add=True)
        peer = self.client_address
        try:
            while True:
                try:
                    data = sock.recv(server.buffer_size)
                except OSError:
                    data = b""
                if not data:
                    if not server.stopping:
                        decoder.close()
                    break
                for record in decoder.feed(data):
                    server.sink(record)
                    server.count("records")
        except (DecodeError, RegistryError) as exc:
            server.count("connection_errors")
            log.warning("closing connection %s: %s", peer, exc)
        finally:
            server.track(sock, add=False)
            server.count("connections_closed")


class _IngestServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = False
    block_on_close = True

    def __init__(self, address, sink, buffer_size):
        self.sink = sink
        self.buffer_size = buffer_size
        self.stopping = False
        self.counters = {"connections": 0, "connections_closed": 0, "connection_errors": 0, "records": 0}
        self._lock = threading.Lock()
        self._active: set[socket.socket] = set()
        super().__init__(address, _ConnectionHandler)

    def count(self, key: str, n: int = 1) -> None:
        with self._lock:
            self.counters[key] += n

    def track(self, sock, add: bool) -> None:
        with self._lock:
            if add:
                self._active.add(sock)
                self.counters["connections"] += 1
            else:
                self._active.discard(sock)

    def drop_connections(self) -> None:
        with self._lock:
            active = list(self._active)
        for sock in active:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass


class TcpSource:
    """Accepts any number of concurrent probe connections.

    Each connection gets its own :class:`StringRegistry` and reader thread,
    and its records reach *sink* in arrival order. A decode error closes
    only the offending connection.
    """

    def __init__(
        self,
        sink: Callable[[MonitoringRecord], None],
        host: str = "0.0.0.0",
        port: int = DEFAULT_PORT,
        buffer_size: int = DEFAULT_BUFFER_SIZE,
    ):
        try:
            self._server = _IngestServer((host, port), sink, buffer_size)
        except OSError as exc:
            raise BindError(f"cannot listen on {host}:{port}: {exc}") from exc
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def counters(self) -> dict[str, int]:
        with self._server._lock:
            return dict(self._server.counters)

    def start(self) -> TcpSource:
        self._thread = threading.Thread(target=self._server.serve_forever, name="tcp-accept", daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        """Stop accepting, close live connections and wait for their readers."""
        server = self._server
        server.stopping = True
        if self._thread is not None:
            server.shutdown()
            self._thread.join()
        server.drop_connections()
        server.server_close()

    def __enter__(self) -> TcpSource:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(
    listen_addr: tuple[str, int],
    sink: Callable[[MonitoringRecord], None],
    stop: threading.Event,
    buffer_size: int = DEFAULT_BUFFER_SIZE,
) -> dict[str, int]:
    """Run a :class:`TcpSource` until *stop* is set; return its counters."""
    source = TcpSource(sink, listen_addr[0], listen_addr[1], buffer_size)
    source.start()
    try:
        stop.wait()
    finally:
        source.shutdown()
    return source.counters


def send_records(
    records: Iterable[MonitoringRecord],
    target: tuple[str, int],
    registry: StringRegistry | None = None,
    chunk_size: int = 256,
) -> int:
    """Open one connection to *target* and write *records*; return bytes sent."""
    registry = StringRegistry() if registry is None else registry
    sent = 0
    with socket.create_connection(target) as sock:
        chunk: list[bytes] = []
        for record in records:
            chunk.append(encode_frame(record, registry))
            if len(chunk) >= chunk_size:
                data = b"".join(chunk)
                sock.sendall(data)
                sent += len(data)
                chunk.clear()
        if chunk:
            data = b"".join(chunk)
            sock.sendall(data)
            sent += len(data)
    return sent
