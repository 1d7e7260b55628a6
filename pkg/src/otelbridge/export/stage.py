from __future__ import annotations

import logging
import time

from ..pipeline import Stage
from ..reconstruct import ExecutionTrace
from .base import Exporter, ExportResult
from .spans import SpanBatch, map_trace

log = logging.getLogger(__name__)


class OpenTelemetryExporterStage(Stage):
    """Maps incoming traces to spans and hands them to *exporter*.

    Spans accumulate in an outbox that is flushed once it holds
    ``max_batch_spans`` spans or is older than ``flush_interval_ns``. The
    stage's bounded inbox is what pushes back on upstream when the
    endpoint is slow.
    """

    def __init__(
        self,
        exporter: Exporter,
        name: str | None = None,
        max_batch_spans: int = 512,
        flush_interval_ns: int = 100_000_000,
        counters=None,
        clock=None,
        inputs: int = 1,
    ):
        super().__init__(name)
        for i in range(inputs):
            self.add_input(ExecutionTrace, "traces" if inputs == 1 else f"traces-{i}")
        self.exporter = exporter
        self.max_batch_spans = max_batch_spans
        self.flush_interval_ns = flush_interval_ns
        self.counters = counters
        self.clock = clock or time.monotonic_ns
        self.outbox = SpanBatch()
        self._outbox_since = 0
        self.last_result: ExportResult | None = None
        self.spans_exported = 0
        self.export_failures = 0

    def on_element(self, port, item: ExecutionTrace) -> None:
        if not self.outbox.spans:
            self._outbox_since = self.clock()
        self.outbox.extend(map_trace(item))
        if len(self.outbox) >= self.max_batch_spans:
            self.flush()

    def on_tick(self, now_ns: int) -> None:
        if self.outbox.spans and now_ns - self._outbox_since >= self.flush_interval_ns:
            self.flush()

    def flush(self) -> ExportResult | None:
        if not self.outbox.spans:
            return None
        batch, self.outbox = self.outbox, SpanBatch()
        result = self.last_result = self.exporter.export(batch)
        self.spans_exported += result.accepted
        if not result.ok:
            self.export_failures += 1
            log.warning("export of %d spans incomplete: %s", len(batch), result.error)
        if self.counters is not None:
            self.counters.add("spans_exported", result.accepted)
            if not result.ok:
                self.counters.add("export_failures")
        return result

    def on_terminate(self) -> None:
        self.flush()
        self.exporter.shutdown()
