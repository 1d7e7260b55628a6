from __future__ import annotations

import json
import sys
from typing import TextIO

from .base import Exporter
from .spans import Span, SpanBatch


def span_to_json(span: Span) -> str:
    obj = {
        "traceId": span.trace_id.hex(),
        "spanId": span.span_id.hex(),
        "name": span.name,
        "startNs": span.start_ns,
        "endNs": span.end_ns,
        "serviceName": span.service_name,
        "attributes": span.attributes,
    }
    if span.parent_span_id is not None:
        obj["parentSpanId"] = span.parent_span_id.hex()
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class StdoutExporter(Exporter):
    """Writes one JSON object per span and line. Never fails transiently."""

    def __init__(self, stream: TextIO | None = None, **kwargs):
        super().__init__(**kwargs)
        self.stream = stream

    def _send(self, batch: SpanBatch) -> int:
        stream = self.stream or sys.stdout
        stream.write("".join(span_to_json(s) + "\n" for s in batch))
        stream.flush()
        return 0
