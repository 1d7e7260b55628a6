"""In-process collectors for closed-loop tests and demos.

Neither is meant for production: they keep every received payload in
memory.
"""

from __future__ import annotations

import json
import threading
from concurrent import futures
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import grpc
from opentelemetry.proto.collector.trace.v1 import trace_service_pb2, trace_service_pb2_grpc


class _TraceService(trace_service_pb2_grpc.TraceServiceServicer):
    def __init__(self, collector: LoopbackOtlpCollector):
        self.collector = collector

    def Export(self, request, context):
        c = self.collector
        with c.lock:
            if c.fail_next > 0:
                c.fail_next -= 1
                c.failed_calls += 1
                context.abort(grpc.StatusCode.UNAVAILABLE, "loopback collector told to fail")
            c.requests.append(request)
            n = sum(len(ss.spans) for rs in request.resource_spans for ss in rs.scope_spans)
            rejected = min(c.reject_spans, n)
            c.spans_received += n - rejected
        response = trace_service_pb2.ExportTraceServiceResponse()
        if rejected:
            response.partial_success.rejected_spans = rejected
            response.partial_success.error_message = "rejected by loopback collector"
        return response


class LoopbackOtlpCollector:
    """OTLP/gRPC trace service on an ephemeral localhost port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, fail_next: int = 0, reject_spans: int = 0):
        self.lock = threading.Lock()
        self.requests: list = []
        self.spans_received = 0
        self.failed_calls = 0
        self.fail_next = fail_next
        self.reject_spans = reject_spans
        self._server = grpc.server(futures.ThreadPoolExecutor(max_workers=2))
        trace_service_pb2_grpc.add_TraceServiceServicer_to_server(_TraceService(self), self._server)
        self.port = self._server.add_insecure_port(f"{host}:{port}")
        self.host = host

    @property
    def endpoint(self) -> str:
        return f"http://{self.host}:{self.port}"

    def spans(self) -> list:
        with self.lock:
            return [
                (rs, span)
                for req in self.requests
                for rs in req.resource_spans
                for ss in rs.scope_spans
                for span in ss.spans
            ]

    def start(self) -> LoopbackOtlpCollector:
        self._server.start()
        return self

    def stop(self) -> None:
        self._server.stop(grace=None)

    def __enter__(self) -> LoopbackOtlpCollector:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class _ZipkinHandler(BaseHTTPRequestHandler):
    server: _ZipkinServer

    def do_POST(self) -> None:
        collector = self.server.collector
        body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
        if self.path != "/api/v2/spans":
            self.send_error(404)
            return
        try:
            payload = json.loads(body)
        except ValueError:
            self.send_error(400, "invalid JSON")
            return
        with collector.lock:
            collector.batches.append(payload)
        self.send_response(202)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def log_message(self, format, *args) -> None:
        pass


class _ZipkinServer(ThreadingHTTPServer):
    daemon_threads = True
    collector: LoopbackZipkinCollector


class LoopbackZipkinCollector:
    """Accepts Zipkin v2 ``POST /api/v2/spans`` and keeps the JSON arrays."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.lock = threading.Lock()
        self.batches: list[list[dict]] = []
        self._server = _ZipkinServer((host, port), _ZipkinHandler)
        self._server.collector = self
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/api/v2/spans"

    def spans(self) -> list[dict]:
        with self.lock:
            return [s for batch in self.batches for s in batch]

    def start(self) -> LoopbackZipkinCollector:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> LoopbackZipkinCollector:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
