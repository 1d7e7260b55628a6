"""Zipkin v2 JSON export."""

from __future__ import annotations

import json
import urllib.error
import urllib.request

from ..errors import TransportError
from .base import Exporter, Rejected
from .spans import Span, SpanBatch

DEFAULT_ZIPKIN_ENDPOINT = "http://localhost:9411/api/v2/spans"


def to_micros(start_ns: int, end_ns: int) -> tuple[int, int]:
    """``(timestamp, duration)`` in microseconds.

    The timestamp is floored; the duration rounds half up and is at least 1,
    since Zipkin treats a zero duration as absent.
    """
    timestamp = start_ns // 1000
    duration = (end_ns - start_ns + 500) // 1000
    return timestamp, max(1, duration)


def zipkin_span(span: Span) -> dict:
    timestamp, duration = to_micros(span.start_ns, span.end_ns)
    out = {
        "traceId": span.trace_id.hex(),
        "id": span.span_id.hex(),
    }
    if span.parent_span_id is not None:
        out["parentId"] = span.parent_span_id.hex()
    out["name"] = span.name.lower()
    out["timestamp"] = timestamp
    out["duration"] = duration
    out["localEndpoint"] = {"serviceName": span.service_name}
    out["tags"] = dict(span.attributes)
    return out


def encode_zipkin(batch: SpanBatch) -> list[dict]:
    return [zipkin_span(s) for s in batch]


def encode_zipkin_json(batch: SpanBatch) -> bytes:
    return json.dumps(encode_zipkin(batch), separators=(",", ":")).encode("utf-8")


class ZipkinExporter(Exporter):
    def __init__(self, endpoint: str = DEFAULT_ZIPKIN_ENDPOINT, timeout: float = 10.0, **kwargs):
        super().__init__(**kwargs)
        self.endpoint = endpoint
        self.timeout = timeout

    def _send(self, batch: SpanBatch) -> int:
        request = urllib.request.Request(
            self.endpoint,
            data=encode_zipkin_json(batch),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                response.read()
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise TransportError(f"Zipkin at {self.endpoint} answered {exc.code}") from exc
            raise Rejected(f"Zipkin at {self.endpoint} answered {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"cannot reach Zipkin at {self.endpoint}: {exc}") from exc
        return 0
