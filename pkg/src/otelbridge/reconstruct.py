"""Assembles executions into complete, eoi-sorted execution traces.

A trace is complete when every eoi in ``0..maxSeenEoi`` has arrived and the
root (eoi 0, ess 0) spans the earliest tin and latest tout buffered for the
trace. Traces are validated before emission; anything that fails goes to
the drop path with a report, never downstream.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .errors import DuplicateEoi, InvalidTrace, NoParentFound
from .pipeline import Stage
from .transform import Execution, TraceBroken

log = logging.getLogger(__name__)

DEFAULT_TRACE_TIMEOUT_NS = 5_000_000_000
DEFAULT_MAX_BUFFERED_TRACES = 10_000
DEFAULT_MAX_TRACE_SIZE = 100_000


@dataclass(frozen=True)
class ExecutionTrace:
    trace_id: int
    executions: tuple[Execution, ...]
    complete: bool = True
    parents: tuple[int | None, ...] = ()

    def __len__(self) -> int:
        return len(self.executions)

    @property
    def root(self) -> Execution:
        return self.executions[0]


@dataclass(frozen=True)
class IncompleteTraceReport:
    trace_id: int
    reason: str  # "timeout" | "broken" | "overflow" | "end_of_stream" | "invalid"
    executions: int
    max_seen_eoi: int
    broken: bool
    idle_ns: int = 0
    detail: str = ""


def parent_index(trace: ExecutionTrace, i: int) -> int | None:
    """Index of the parent of ``executions[i]``, or ``None`` for a root.

    The parent is the latest earlier execution one stack level up.
    """
    executions = trace.executions
    ess = executions[i].ess
    if ess == 0:
        return None
    want = ess - 1
    for j in range(i - 1, -1, -1):
        if executions[j].ess == want:
            return j
    raise NoParentFound(i)


def parent_indices(executions) -> list[int | None]:
    """Parents of all executions of an eoi-sorted list in one pass."""
    last_at_level: list[int] = []
    parents: list[int | None] = []
    for i, e in enumerate(executions):
        ess = e.ess
        if ess == 0:
            parents.append(None)
        elif ess <= len(last_at_level):
            parents.append(last_at_level[ess - 1])
        else:
            raise NoParentFound(i)
        if ess < len(last_at_level):
            last_at_level[ess] = i
        else:
            last_at_level.append(i)
    return parents


def validate_trace(trace_id: int, executions) -> tuple[int | None, ...]:
    """Check the trace invariants; return the parent indices.

    Raises :class:`InvalidTrace` on the first violation.
    """
    if not executions:
        raise InvalidTrace(f"trace {trace_id}: empty")
    for i, e in enumerate(executions):
        if e.eoi != i:
            raise InvalidTrace(f"trace {trace_id}: eoi gap at position {i} (found {e.eoi})")
        if e.trace_id != trace_id:
            raise InvalidTrace(f"trace {trace_id}: foreign execution from trace {e.trace_id}")
        if e.tin > e.tout:
            raise InvalidTrace(f"trace {trace_id}: eoi {i} ends before it starts")
    if executions[0].ess != 0:
        raise InvalidTrace(f"trace {trace_id}: root has ess {executions[0].ess}")
    prev = 0
    for i, e in enumerate(executions[1:], 1):
        if e.ess == 0:
            raise InvalidTrace(f"trace {trace_id}: second root at eoi {i}")
        if e.ess > prev + 1:
            raise InvalidTrace(f"trace {trace_id}: ess jumps from {prev} to {e.ess} at eoi {i}")
        prev = e.ess
    try:
        parents = parent_indices(executions)
    except NoParentFound as exc:
        raise InvalidTrace(f"trace {trace_id}: {exc}") from None
    for i, p in enumerate(parents):
        if p is None:
            continue
        child, parent = executions[i], executions[p]
        if child.tin < parent.tin or child.tout > parent.tout:
            raise InvalidTrace(f"trace {trace_id}: eoi {i} not nested in parent eoi {p}")
    return tuple(parents)


@dataclass
class _PendingTrace:
    by_eoi: dict[int, Execution] = field(default_factory=dict)
    received: int = 0
    max_seen_eoi: int = -1
    min_tin: int = 0
    max_tout: int = 0
    last_activity: int = 0
    broken: bool = False
    detail: str = ""


class ReconstructionBuffer:
    """Buffers executions per trace until their call tree is complete.

    Memory is bounded by ``max_buffered_traces`` (the least recently active
    trace is evicted when exceeded) and ``max_trace_size`` (a trace growing
    past it is marked broken and its executions released).
    """

    def __init__(
        self,
        max_buffered_traces: int = DEFAULT_MAX_BUFFERED_TRACES,
        max_trace_size: int = DEFAULT_MAX_TRACE_SIZE,
    ):
        if max_buffered_traces <= 0 or max_trace_size <= 0:
            raise ValueError("buffer limits must be positive")
        self.max_buffered_traces = max_buffered_traces
        self.max_trace_size = max_trace_size
        # insertion order == activity order; touched traces are moved to the end
        self.pending: dict[int, _PendingTrace] = {}
        self.overflow_reports: list[IncompleteTraceReport] = []
        self.buffered_executions = 0

    def __len__(self) -> int:
        return len(self.pending)

    def __contains__(self, trace_id: int) -> bool:
        return trace_id in self.pending

    def is_broken(self, trace_id: int) -> bool:
        state = self.pending.get(trace_id)
        return bool(state and state.broken)

    def _touch(self, trace_id: int, now: int) -> _PendingTrace:
        state = self.pending.pop(trace_id, None)
        if state is None:
            state = _PendingTrace()
            if len(self.pending) >= self.max_buffered_traces:
                self._evict_oldest(now)
        self.pending[trace_id] = state
        state.last_activity = now
        return state

    def _evict_oldest(self, now: int) -> None:
        trace_id = next(iter(self.pending))
        state = self.pending.pop(trace_id)
        self.buffered_executions -= len(state.by_eoi)
        self.overflow_reports.append(self._report(trace_id, state, "overflow", now))

    @staticmethod
    def _report(trace_id: int, state: _PendingTrace, reason: str, now: int) -> IncompleteTraceReport:
        return IncompleteTraceReport(
            trace_id,
            reason,
            state.received,
            state.max_seen_eoi,
            state.broken,
            now - state.last_activity,
            state.detail,
        )

    def mark_broken(self, trace_id: int, now: int, detail: str = "") -> None:
        state = self._touch(trace_id, now)
        self._break(state, detail)

    def _break(self, state: _PendingTrace, detail: str) -> None:
        if not state.broken:
            state.broken = True
            state.detail = detail
        self.buffered_executions -= len(state.by_eoi)
        state.by_eoi.clear()

    def add_execution(self, e: Execution, now: int) -> list[ExecutionTrace]:
        """Buffer *e*; return the trace it completes, if any.

        A repeated ``(traceId, eoi)`` marks the trace broken and raises
        :class:`DuplicateEoi`. Traces failing validation at completion are
        broken too and raise :class:`InvalidTrace`.
        """
        state = self._touch(e.trace_id, now)
        state.received += 1
        if state.broken:
            return []
        by_eoi = state.by_eoi
        if e.eoi in by_eoi:
            self._break(state, f"duplicate eoi {e.eoi}")
            raise DuplicateEoi(e.trace_id, e.eoi)
        if len(by_eoi) >= self.max_trace_size:
            self._break(state, f"more than {self.max_trace_size} executions")
            return []
        if not by_eoi:
            state.min_tin, state.max_tout = e.tin, e.tout
        else:
            if e.tin < state.min_tin:
                state.min_tin = e.tin
            if e.tout > state.max_tout:
                state.max_tout = e.tout
        by_eoi[e.eoi] = e
        self.buffered_executions += 1
        if e.eoi > state.max_seen_eoi:
            state.max_seen_eoi = e.eoi

        if len(by_eoi) != state.max_seen_eoi + 1:
            return []
        root = by_eoi.get(0)
        if root is None or root.ess != 0 or root.tin != state.min_tin or root.tout != state.max_tout:
            return []

        executions = tuple(by_eoi[i] for i in range(len(by_eoi)))
        try:
            parents = validate_trace(e.trace_id, executions)
        except InvalidTrace as exc:
            self._break(state, str(exc))
            raise
        del self.pending[e.trace_id]
        self.buffered_executions -= len(executions)
        return [ExecutionTrace(e.trace_id, executions, True, parents)]

    def evict_expired(self, now: int, max_age: int) -> list[tuple[int, IncompleteTraceReport]]:
        """Remove every trace idle for more than *max_age* ns, broken or not."""
        if max_age <= 0:
            raise ValueError("max_age must be positive")
        evicted = []
        while self.pending:
            trace_id, state = next(iter(self.pending.items()))
            if now - state.last_activity <= max_age:
                break
            del self.pending[trace_id]
            self.buffered_executions -= len(state.by_eoi)
            reason = "broken" if state.broken else "timeout"
            evicted.append((trace_id, self._report(trace_id, state, reason, now)))
        return evicted

    def drain(self, now: int) -> list[tuple[int, IncompleteTraceReport]]:
        """Remove everything still buffered (end of stream)."""
        reports = [
            (tid, self._report(tid, s, "broken" if s.broken else "end_of_stream", now))
            for tid, s in self.pending.items()
        ]
        self.pending.clear()
        self.buffered_executions = 0
        return reports

    def pop_overflow(self) -> list[IncompleteTraceReport]:
        reports, self.overflow_reports = self.overflow_reports, []
        return reports


def add_execution(buf: ReconstructionBuffer, e: Execution, now: int) -> list[ExecutionTrace]:
    return buf.add_execution(e, now)


def evict_expired(buf: ReconstructionBuffer, now: int, max_age: int):
    return buf.evict_expired(now, max_age)


class TraceReconstructionStage(Stage):
    """Pipeline stage around :class:`ReconstructionBuffer`.

    ``on_report`` is called with every :class:`IncompleteTraceReport`.
    """

    def __init__(
        self,
        name: str | None = None,
        trace_timeout_ns: int = DEFAULT_TRACE_TIMEOUT_NS,
        max_buffered_traces: int = DEFAULT_MAX_BUFFERED_TRACES,
        max_trace_size: int = DEFAULT_MAX_TRACE_SIZE,
        on_report=None,
        on_complete=None,
        clock=None,
    ):
        super().__init__(name)
        self.add_input((Execution, TraceBroken), "executions")
        self.add_output(ExecutionTrace, "traces")
        self.buffer = ReconstructionBuffer(max_buffered_traces, max_trace_size)
        self.trace_timeout_ns = trace_timeout_ns
        self.on_report = on_report
        self.on_complete = on_complete
        self.clock = clock or time.monotonic_ns
        self.now = 0
        self.complete = 0
        self.reports: list[IncompleteTraceReport] = []

    def _report(self, report: IncompleteTraceReport) -> None:
        self.drop(report.executions)
        if self.on_report is not None:
            self.on_report(report)
        else:
            self.reports.append(report)

    def on_element(self, port, item) -> None:
        now = self.clock()
        if type(item) is TraceBroken:
            self.buffer.mark_broken(item.trace_id, now, item.reason)
            return
        try:
            traces = self.buffer.add_execution(item, now)
        except (DuplicateEoi, InvalidTrace) as exc:
            log.debug("trace broken: %s", exc)
            traces = []
        for trace in traces:
            self.complete += 1
            if self.on_complete is not None:
                self.on_complete(trace)
            self.emit(trace)
        for report in self.buffer.pop_overflow():
            self._report(report)

    def on_tick(self, now_ns: int) -> None:
        self.now = now_ns
        for _, report in self.buffer.evict_expired(now_ns, self.trace_timeout_ns):
            self._report(report)

    def on_terminate(self) -> None:
        for _, report in self.buffer.drain(self.clock()):
            self._report(report)
