"""One trace, three encodings: stdout JSON lines, Zipkin v2 and OTLP."""

import json
import sys

from otelbridge.export import encode_otlp_request, encode_zipkin, export_otlp, map_trace
from otelbridge.export.collectors import LoopbackOtlpCollector
from otelbridge.export.stdout import StdoutExporter
from otelbridge.reconstruct import ReconstructionBuffer
from otelbridge.tools.emitter import ScenarioConfig, generate_traces
from otelbridge.transform import from_oer

synthetic = next(generate_traces(ScenarioConfig(traces=1, max_depth=3, seed=3)))
buf = ReconstructionBuffer()
(trace,) = [t for r in synthetic.records for t in buf.add_execution(from_oer(r), 0)]

batch = map_trace(trace)
print(f"trace {trace.trace_id}: {len(batch)} spans over {sorted(batch.groups())}\n")

StdoutExporter(sys.stdout).export(batch)

zipkin = encode_zipkin(batch)
print("\nzipkin root:", json.dumps(zipkin[0], indent=2))

request = encode_otlp_request(batch)
print(f"\notlp request: {len(request.resource_spans)} resource spans, {request.ByteSize()} bytes")

with LoopbackOtlpCollector() as collector:
    result = export_otlp(batch, collector.endpoint)
print(f"loopback collector accepted {result.accepted} of {len(batch)} spans")
