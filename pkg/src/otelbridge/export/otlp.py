"""OTLP/gRPC trace export."""

from __future__ import annotations

import logging
from urllib.parse import urlparse

import grpc
from opentelemetry.proto.collector.trace.v1 import trace_service_pb2, trace_service_pb2_grpc
from opentelemetry.proto.common.v1 import common_pb2
from opentelemetry.proto.resource.v1 import resource_pb2
from opentelemetry.proto.trace.v1 import trace_pb2

from .. import __version__
from ..errors import TransportError
from .base import Exporter, Rejected
from .spans import SpanBatch

log = logging.getLogger(__name__)

DEFAULT_OTLP_ENDPOINT = "http://localhost:4317"
SCOPE_NAME = "otelbridge"

_RETRIABLE_CODES = frozenset(
    {
        grpc.StatusCode.UNAVAILABLE,
        grpc.StatusCode.DEADLINE_EXCEEDED,
        grpc.StatusCode.RESOURCE_EXHAUSTED,
        grpc.StatusCode.ABORTED,
        grpc.StatusCode.CANCELLED,
        grpc.StatusCode.OUT_OF_RANGE,
        grpc.StatusCode.DATA_LOSS,
    }
)


def _kv(key: str, value: str) -> common_pb2.KeyValue:
    return common_pb2.KeyValue(key=key, value=common_pb2.AnyValue(string_value=value))


def encode_otlp_request(batch: SpanBatch) -> trace_service_pb2.ExportTraceServiceRequest:
    """One resource-spans entry per service name, in order of first appearance."""
    request = trace_service_pb2.ExportTraceServiceRequest()
    for service, spans in batch.groups().items():
        resource_spans = request.resource_spans.add()
        resource_spans.resource.CopyFrom(
            resource_pb2.Resource(
                attributes=[_kv(k, v) for k, v in batch.resource_attributes(service).items()]
            )
        )
        scope_spans = resource_spans.scope_spans.add()
        scope_spans.scope.name = SCOPE_NAME
        scope_spans.scope.version = __version__
        for span in spans:
            out = scope_spans.spans.add()
            out.trace_id = span.trace_id
            out.span_id = span.span_id
            if span.parent_span_id is not None:
                out.parent_span_id = span.parent_span_id
            out.name = span.name
            out.kind = trace_pb2.Span.SPAN_KIND_INTERNAL
            out.start_time_unix_nano = span.start_ns
            out.end_time_unix_nano = span.end_ns
            out.attributes.extend(_kv(k, v) for k, v in span.attributes.items())
    return request


def grpc_target(endpoint: str) -> str:
    """``http://host:port`` -> ``host:port``; bare ``host:port`` passes through."""
    if "://" not in endpoint:
        return endpoint
    parsed = urlparse(endpoint)
    return f"{parsed.hostname}:{parsed.port or 4317}"


class OtlpExporter(Exporter):
    def __init__(self, endpoint: str = DEFAULT_OTLP_ENDPOINT, timeout: float = 10.0, **kwargs):
        super().__init__(**kwargs)
        self.endpoint = endpoint
        self.timeout = timeout
        self._channel = grpc.insecure_channel(grpc_target(endpoint))
        self._stub = trace_service_pb2_grpc.TraceServiceStub(self._channel)

    def _send(self, batch: SpanBatch) -> int:
        request = encode_otlp_request(batch)
        try:
            response = self._stub.Export(request, timeout=self.timeout)
        except grpc.RpcError as exc:
            code = exc.code() if hasattr(exc, "code") else None
            if code in _RETRIABLE_CODES:
                raise TransportError(f"OTLP export to {self.endpoint} failed: {code}") from exc
            raise Rejected(f"OTLP export to {self.endpoint} rejected: {code}") from exc
        if response.HasField("partial_success"):
            rejected = response.partial_success.rejected_spans
            if rejected:
                log.warning("collector rejected %d spans: %s", rejected, response.partial_success.error_message)
            return rejected
        return 0

    def shutdown(self) -> None:
        self._channel.close()
