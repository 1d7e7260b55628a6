"""The transformer daemon.

Wires the full chain::

    TcpIngest -> ShardRouter -> N x (transform -> reconstruct) -> exporter

and serves plaintext counters on ``GET /stats``.
"""

from __future__ import annotations

import collections
import logging
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..export.base import Exporter
from ..export.otlp import OtlpExporter
from ..export.stage import OpenTelemetryExporterStage
from ..export.stdout import StdoutExporter
from ..export.zipkin import ZipkinExporter
from ..pipeline import Pipeline, SourceStage, Stage
from ..reconstruct import TraceReconstructionStage
from ..records import MonitoringRecord
from ..stats import Counters
from ..transform import ExecutionRecordTransformationStage
from ..wire import TcpSource
from .config import BridgeConfig

log = logging.getLogger(__name__)

STATS_COUNTERS = (
    "records_in",
    "executions",
    "traces_complete",
    "traces_dropped",
    "spans_exported",
    "export_failures",
    "records_invalid",
    "connections",
    "connection_errors",
)

_STOP = object()


class TcpIngestStage(SourceStage):
    """Source stage fed by a :class:`TcpSource`; blocks readers when full."""

    def __init__(self, host: str, port: int, buffer_size: int, capacity: int, counters: Counters):
        super().__init__("tcp-source")
        self.add_output(MonitoringRecord, "records")
        self.counters = counters
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self.tcp = TcpSource(self._deliver, host, port, buffer_size)

    def _deliver(self, record: MonitoringRecord) -> None:
        self._queue.put(record)
        self.counters.add("records_in")

    def generate(self):
        get = self._queue.get
        while True:
            item = get()
            if item is _STOP:
                return
            yield item

    def stop(self) -> None:
        self.tcp.shutdown()
        self._queue.put(_STOP)


class ShardRouter(Stage):
    def __init__(self, shards: int):
        super().__init__("shard-router")
        self.add_input(MonitoringRecord, "records")
        for i in range(shards):
            self.add_output(MonitoringRecord, f"shard-{i}")
        self.shards = shards

    def on_element(self, port, item) -> None:
        self.emit(item, item.trace_id % self.shards)


def make_exporter(cfg: BridgeConfig, stream=None) -> Exporter:
    if cfg.exporter == "otlp":
        return OtlpExporter(cfg.otlp_endpoint)
    if cfg.exporter == "zipkin":
        return ZipkinExporter(cfg.zipkin_endpoint)
    return StdoutExporter(stream)


class _StatsHandler(BaseHTTPRequestHandler):
    def do_GET(self) -> None:
        if self.path.split("?")[0] != "/stats":
            self.send_error(404)
            return
        body = self.server.render().encode()
        self.send_response(200)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format, *args) -> None:
        pass


class Transformer:
    """Long-running bridge. ``start()``, then ``shutdown()`` drains and stops."""

    def __init__(self, cfg: BridgeConfig, exporter: Exporter | None = None, stream=None, keep_reports: int = 100_000):
        self.cfg = cfg.validate()
        self.counters = Counters(STATS_COUNTERS)
        self.reports: collections.deque = collections.deque(maxlen=keep_reports)
        self._reports_lock = threading.Lock()
        timeout_ns = cfg.trace_timeout_ms * 1_000_000

        self.pipeline = Pipeline(capacity=cfg.queue_capacity)
        self.source = TcpIngestStage(cfg.listen_host, cfg.listen_port, cfg.buffer_size, cfg.queue_capacity, self.counters)
        router = ShardRouter(cfg.shard_count)
        self.exporter_stage = OpenTelemetryExporterStage(
            exporter or make_exporter(cfg, stream),
            name="otel-exporter",
            counters=self.counters,
            inputs=cfg.shard_count,
        )
        self.pipeline.connect(self.source.output, router.input)
        self.transformers = []
        self.reconstructors = []
        for i in range(cfg.shard_count):
            transform = ExecutionRecordTransformationStage(f"transform-{i}", timeout_ns, self.counters)
            reconstruct = TraceReconstructionStage(
                f"reconstruct-{i}",
                timeout_ns,
                cfg.max_buffered_traces,
                cfg.max_trace_size,
                on_report=self._on_report,
                on_complete=self._on_complete,
            )
            self.pipeline.connect(router.outputs[i], transform.input)
            self.pipeline.connect(transform.output, reconstruct.input)
            self.pipeline.connect(reconstruct.output, self.exporter_stage.inputs[i])
            self.transformers.append(transform)
            self.reconstructors.append(reconstruct)
        self._run = None
        self._stats_server: ThreadingHTTPServer | None = None
        self._stopped = threading.Event()

    # -- callbacks from shard threads -------------------------------------

    def _on_report(self, report) -> None:
        self.counters.add("traces_dropped")
        with self._reports_lock:
            self.reports.append(report)

    def _on_complete(self, trace) -> None:
        self.counters.add("traces_complete")

    # -- lifecycle ---------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        return self.source.tcp.address

    @property
    def stats_address(self) -> tuple[str, int] | None:
        return self._stats_server.server_address[:2] if self._stats_server else None

    def stats(self) -> dict[str, int]:
        snapshot = self.counters.snapshot()
        tcp = self.source.tcp.counters
        snapshot["connections"] = tcp["connections"]
        snapshot["connection_errors"] = tcp["connection_errors"]
        snapshot["records_invalid"] = sum(t.invalid_records for t in self.transformers)
        return snapshot

    def render_stats(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.stats().items())

    def start(self) -> Transformer:
        if self.cfg.stats_port is not None:
            server = ThreadingHTTPServer((self.cfg.stats_host, self.cfg.stats_port), _StatsHandler)
            server.daemon_threads = True
            server.render = self.render_stats
            self._stats_server = server
            threading.Thread(target=server.serve_forever, name="stats-http", daemon=True).start()
        self._run = self.pipeline.start()
        self.source.tcp.start()
        host, port = self.address
        log.info("listening for records on %s:%d, exporter=%s", host, port, self.cfg.exporter)
        return self

    def shutdown(self, timeout: float | None = 60.0):
        """Stop ingest, drain every queue, flush the exporter."""
        if self._stopped.is_set():
            return None
        self._stopped.set()
        self.source.stop()
        report = self._run.join(timeout) if self._run else None
        if self._stats_server is not None:
            self._stats_server.shutdown()
            self._stats_server.server_close()
        if report is not None:
            for failure in report.errors:
                log.error("stage failure: %s", failure)
        return report

    def wait_until(self, predicate, timeout: float = 30.0, interval: float = 0.02) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if predicate(self.stats()):
                return True
            time.sleep(interval)
        return predicate(self.stats())

    def __enter__(self) -> Transformer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()


def run_transformer(cfg: BridgeConfig, stop: threading.Event, stream=None):
    """Run until *stop* is set; returns the pipeline's termination report."""
    transformer = Transformer(cfg, stream=stream).start()
    stop.wait()
    return transformer.shutdown()
