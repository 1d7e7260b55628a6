"""Turns heterogeneous monitoring records into uniform :class:`Execution` values.

Operation-execution records map field for field. Before/after event pairs
are matched with a per-trace stack: a before-event opens a frame whose eoi
is the trace's running counter and whose ess is the current stack depth;
the matching after-event closes it and yields the execution. Executions
therefore leave in completion order (children before their parent).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .errors import InvalidRecord, MalformedSignature, UnbalancedEvent
from .pipeline import Stage
from .records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    MonitoringRecord,
    OperationExecutionRecord,
    OperationSignature,
    TraceMetadataRecord,
    parse_signature,
)

log = logging.getLogger(__name__)

NO_SESSION = "<no-session>"


@dataclass(frozen=True, slots=True)
class Execution:
    signature: OperationSignature
    hostname: str
    session_id: str
    trace_id: int
    tin: int
    tout: int
    eoi: int
    ess: int

    @property
    def duration(self) -> int:
        return self.tout - self.tin


@dataclass(frozen=True, slots=True)
class TraceBroken:
    """Control message: every execution of *trace_id* must be discarded."""

    trace_id: int
    reason: str


def from_oer(r: OperationExecutionRecord) -> Execution:
    if r.trace_id < 0:
        raise InvalidRecord(f"untracked execution (traceId={r.trace_id})")
    if r.eoi < 0 or r.ess < 0:
        raise InvalidRecord(f"trace {r.trace_id}: sentinel eoi/ess ({r.eoi}, {r.ess})")
    if r.tin > r.tout:
        raise InvalidRecord(f"trace {r.trace_id}: tin {r.tin} after tout {r.tout}")
    if r.logging_timestamp < 0:
        raise InvalidRecord(f"trace {r.trace_id}: negative logging timestamp")
    try:
        signature = parse_signature(r.operation_signature)
    except MalformedSignature as exc:
        raise InvalidRecord(str(exc)) from None
    return Execution(signature, r.hostname, r.session_id, r.trace_id, r.tin, r.tout, r.eoi, r.ess)


@dataclass
class _OpenFrame:
    signature: str
    timestamp: int
    eoi: int
    ess: int


@dataclass
class _TraceEvents:
    stack: list[_OpenFrame] = field(default_factory=list)
    next_eoi: int = 0
    metadata: TraceMetadataRecord | None = None
    last_activity: int = 0
    broken: bool = False
    buffered_events: int = 0


@dataclass(frozen=True)
class EventTraceReport:
    trace_id: int
    reason: str
    open_frames: int
    broken: bool


class TraceAssemblyState:
    """Per-trace stacks for event-based records."""

    def __init__(self) -> None:
        self.traces: dict[int, _TraceEvents] = {}
        self.dropped_events = 0
        self.broken_traces = 0

    def __len__(self) -> int:
        return len(self.traces)

    def is_broken(self, trace_id: int) -> bool:
        state = self.traces.get(trace_id)
        return bool(state and state.broken)

    def open_frames(self, trace_id: int) -> int:
        state = self.traces.get(trace_id)
        return len(state.stack) if state else 0

    def _state(self, trace_id: int, now: int) -> _TraceEvents:
        state = self.traces.get(trace_id)
        if state is None:
            state = self.traces[trace_id] = _TraceEvents()
        else:
            # re-insert to keep dict order by last activity
            del self.traces[trace_id]
            self.traces[trace_id] = state
        state.last_activity = now
        return state

    def _break(self, state: _TraceEvents, trace_id: int, reason: str) -> UnbalancedEvent:
        state.broken = True
        state.stack.clear()
        self.broken_traces += 1
        return UnbalancedEvent(trace_id, reason)

    def consume_event(self, e: MonitoringRecord, now: int = 0) -> list[Execution]:
        """Feed one event; return the executions it completes.

        Raises :class:`UnbalancedEvent` when an after-event has no open frame
        or closes a frame with a different signature; the trace is then
        marked broken and ignored until evicted.
        """
        if e.trace_id < 0:
            self.dropped_events += 1
            raise InvalidRecord(f"untracked event (traceId={e.trace_id})")
        state = self._state(e.trace_id, now)
        if isinstance(e, TraceMetadataRecord):
            if state.metadata is None:
                state.metadata = e
            elif state.metadata != e:
                log.debug("ignoring conflicting metadata for trace %d", e.trace_id)
            return []
        if state.broken:
            self.dropped_events += 1
            return []

        if isinstance(e, BeforeOperationEvent):
            state.stack.append(_OpenFrame(e.operation_signature, e.timestamp, state.next_eoi, len(state.stack)))
            state.next_eoi += 1
            return []

        if isinstance(e, AfterOperationEvent):
            if not state.stack:
                raise self._break(state, e.trace_id, "after-event with no open operation")
            top = state.stack[-1]
            if top.signature != e.operation_signature:
                raise self._break(
                    state, e.trace_id, f"after-event {e.operation_signature!r} closes {top.signature!r}"
                )
            if e.timestamp < top.timestamp:
                raise self._break(state, e.trace_id, "after-event precedes its before-event")
            try:
                signature = parse_signature(e.operation_signature)
            except MalformedSignature as exc:
                raise self._break(state, e.trace_id, str(exc)) from None
            state.stack.pop()
            meta = state.metadata
            hostname = meta.hostname if meta else ""
            session = meta.session_id if meta else NO_SESSION
            return [Execution(signature, hostname, session, e.trace_id, top.timestamp, e.timestamp, top.eoi, top.ess)]

        raise InvalidRecord(f"not an event record: {type(e).__name__}")

    def evict_expired(self, now: int, max_age: int) -> list[EventTraceReport]:
        """Forget traces idle longer than *max_age*.

        Traces whose stack is empty and which are not broken are closed
        cleanly and not reported; everything else is reported.
        """
        reports = []
        for trace_id in list(self.traces):
            state = self.traces[trace_id]
            if now - state.last_activity <= max_age:
                break
            del self.traces[trace_id]
            if state.broken or state.stack:
                reports.append(EventTraceReport(trace_id, "timeout", len(state.stack), state.broken))
        return reports

    def finish(self) -> list[EventTraceReport]:
        """End of stream: every trace with open frames becomes broken."""
        reports = []
        for trace_id, state in self.traces.items():
            if state.stack and not state.broken:
                state.broken = True
                self.broken_traces += 1
            if state.broken:
                reports.append(EventTraceReport(trace_id, "end_of_stream", len(state.stack), True))
        self.traces.clear()
        return reports


def consume_event(state: TraceAssemblyState, e: MonitoringRecord, now: int = 0) -> list[Execution]:
    return state.consume_event(e, now)


class ExecutionRecordTransformationStage(Stage):
    """Pipeline stage wrapping :func:`from_oer` and :class:`TraceAssemblyState`.

    Emits :class:`Execution` values and :class:`TraceBroken` notices for
    event traces found to be corrupt, so downstream can discard them.
    """

    def __init__(self, name: str | None = None, max_idle_ns: int = 5_000_000_000, counters=None, clock=None):
        super().__init__(name)
        self.add_input(MonitoringRecord, "records")
        self.add_output((Execution, TraceBroken), "executions")
        self.state = TraceAssemblyState()
        self.max_idle_ns = max_idle_ns
        self.counters = counters
        self.invalid_records = 0
        self.executions = 0
        self.clock = clock or time.monotonic_ns

    def _emit_executions(self, executions) -> None:
        for execution in executions:
            self.executions += 1
            self.emit(execution)
        if self.counters is not None and executions:
            self.counters.add("executions", len(executions))

    def on_element(self, port, item) -> None:
        if type(item) is OperationExecutionRecord:
            try:
                execution = from_oer(item)
            except InvalidRecord as exc:
                self.invalid_records += 1
                self.drop()
                log.debug("dropping record: %s", exc)
                return
            self._emit_executions((execution,))
            return
        try:
            executions = self.state.consume_event(item, self.clock())
        except UnbalancedEvent as exc:
            log.debug("broken trace: %s", exc)
            self.emit(TraceBroken(exc.trace_id, str(exc)))
            return
        except InvalidRecord:
            self.invalid_records += 1
            self.drop()
            return
        self._emit_executions(executions)

    def on_tick(self, now_ns: int) -> None:
        for report in self.state.evict_expired(now_ns, self.max_idle_ns):
            if not report.broken:
                self.emit(TraceBroken(report.trace_id, "open operations timed out"))

    def on_terminate(self) -> None:
        for report in self.state.finish():
            if report.open_frames:
                self.emit(TraceBroken(report.trace_id, "open operations at end of stream"))
