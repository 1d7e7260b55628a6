from .base import ExportResult, Exporter, RetryPolicy
from .otlp import DEFAULT_OTLP_ENDPOINT, OtlpExporter, encode_otlp_request
from .spans import Span, SpanBatch, derive_span_id, derive_trace_id, map_trace
from .stage import OpenTelemetryExporterStage
from .stdout import StdoutExporter, span_to_json
from .zipkin import DEFAULT_ZIPKIN_ENDPOINT, ZipkinExporter, encode_zipkin, to_micros


def export_otlp(batch: SpanBatch, endpoint: str = DEFAULT_OTLP_ENDPOINT, **kwargs) -> ExportResult:
    exporter = OtlpExporter(endpoint, **kwargs)
    try:
        return exporter.export(batch)
    finally:
        exporter.shutdown()


def export_zipkin(batch: SpanBatch, endpoint: str = DEFAULT_ZIPKIN_ENDPOINT, **kwargs) -> ExportResult:
    return ZipkinExporter(endpoint, **kwargs).export(batch)


__all__ = [
    "DEFAULT_OTLP_ENDPOINT",
    "DEFAULT_ZIPKIN_ENDPOINT",
    "ExportResult",
    "Exporter",
    "OpenTelemetryExporterStage",
    "OtlpExporter",
    "RetryPolicy",
    "Span",
    "SpanBatch",
    "StdoutExporter",
    "ZipkinExporter",
    "derive_span_id",
    "derive_trace_id",
    "encode_otlp_request",
    "encode_zipkin",
    "export_otlp",
    "export_zipkin",
    "map_trace",
    "span_to_json",
    "to_micros",
]
