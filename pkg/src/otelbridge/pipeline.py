"""A small pipe-and-filter engine.

Stages own typed input and output ports; :func:`connect` wires an output
port to an input port. Every stage has one bounded inbox shared by its
input ports, so FIFO order holds per edge. End-of-stream travels in-band:
a stage terminates once every input port has delivered it, then forwards
it downstream exactly once.

Two schedulers exist. ``threaded`` runs one thread per stage with blocking
writes into bounded inboxes (backpressure). ``sync`` steps stages
round-robin on the calling thread, which gives deterministic tests.
"""

from __future__ import annotations

import collections
import logging
import queue
import threading
import time
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

from .errors import CycleError, PipelineError, TypeMismatch

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 1024
DEFAULT_TICK_INTERVAL = 0.05


class _EndOfStream:
    __slots__ = ()

    def __repr__(self) -> str:
        return "END_OF_STREAM"


END_OF_STREAM = _EndOfStream()


def _types(t) -> tuple[type, ...]:
    return t if isinstance(t, tuple) else (t,)


def _compatible(produced, accepted) -> bool:
    accepted = _types(accepted)
    if object in accepted or Any in accepted:
        return True
    return all(
        p is not Any and p is not object and issubclass(p, accepted) for p in _types(produced)
    )


class InputPort:
    def __init__(self, stage: Stage, index: int, type_, name: str):
        self.stage = stage
        self.index = index
        self.type = type_
        self.name = name
        self.connected = 0

    def __repr__(self) -> str:
        return f"<InputPort {self.stage.name}.{self.name}>"


class OutputPort:
    def __init__(self, stage: Stage, index: int, type_, name: str):
        self.stage = stage
        self.index = index
        self.type = type_
        self.name = name
        self.targets: list[InputPort] = []

    def __repr__(self) -> str:
        return f"<OutputPort {self.stage.name}.{self.name}>"


@dataclass
class Edge:
    source: OutputPort
    target: InputPort


def connect(out: OutputPort, inp: InputPort) -> Edge:
    if not _compatible(out.type, inp.type):
        raise TypeMismatch(f"{out!r} produces {out.type!r}, {inp!r} accepts {inp.type!r}")
    out.targets.append(inp)
    inp.connected += 1
    return Edge(out, inp)


class Stage:
    """Base class for filters.

    Subclasses declare ports with :meth:`add_input` / :meth:`add_output`
    and override :meth:`on_element`. :meth:`on_tick` is called periodically
    (also while idle) and :meth:`on_terminate` once, after the last input.
    """

    def __init__(self, name: str | None = None):
        self.name = name or type(self).__name__
        self.inputs: list[InputPort] = []
        self.outputs: list[OutputPort] = []
        self.elements_in = 0
        self.elements_out = 0
        self.dropped = 0
        self._sink: Callable[[int, Any], None] | None = None

    def add_input(self, type_=object, name: str = "in") -> InputPort:
        port = InputPort(self, len(self.inputs), type_, name)
        self.inputs.append(port)
        return port

    def add_output(self, type_=object, name: str = "out") -> OutputPort:
        port = OutputPort(self, len(self.outputs), type_, name)
        self.outputs.append(port)
        return port

    @property
    def input(self) -> InputPort:
        return self.inputs[0]

    @property
    def output(self) -> OutputPort:
        return self.outputs[0]

    def emit(self, item, port: int = 0) -> None:
        self.elements_out += 1
        self._sink(port, item)

    def drop(self, n: int = 1) -> None:
        self.dropped += n

    def on_start(self) -> None:
        pass

    def on_element(self, port: InputPort, item) -> None:
        raise NotImplementedError

    def on_tick(self, now_ns: int) -> None:
        pass

    def on_terminate(self) -> None:
        pass


class SourceStage(Stage):
    """A stage without inputs; :meth:`generate` yields its elements."""

    def generate(self) -> Iterable:
        raise NotImplementedError

    def on_element(self, port, item) -> None:  # pragma: no cover - sources have no inputs
        raise PipelineError(f"source {self.name} has no inputs")


class IterableSource(SourceStage):
    def __init__(self, items: Iterable, type_=object, name: str | None = None):
        super().__init__(name)
        self._items = items
        self.add_output(type_)

    def generate(self):
        return self._items


class MapStage(Stage):
    """Applies *fn* to each element; returning ``None`` drops it."""

    def __init__(self, fn: Callable, in_type=object, out_type=object, name: str | None = None):
        super().__init__(name)
        self.fn = fn
        self.add_input(in_type)
        self.add_output(out_type)

    def on_element(self, port, item) -> None:
        result = self.fn(item)
        if result is None:
            self.drop()
        else:
            self.emit(result)


class CollectSink(Stage):
    def __init__(self, type_=object, name: str | None = None):
        super().__init__(name)
        self.items: list = []
        self.add_input(type_)

    def on_element(self, port, item) -> None:
        self.items.append(item)


@dataclass
class StageCounts:
    elements_in: int = 0
    elements_out: int = 0
    dropped: int = 0


@dataclass
class StageFailure:
    stage: str
    element_index: int
    error: BaseException
    traceback: str = ""

    def __str__(self) -> str:
        return f"{self.stage}: element #{self.element_index}: {self.error!r}"


@dataclass
class TerminationReport:
    counts: dict[str, StageCounts] = field(default_factory=dict)
    errors: list[StageFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


class _StageRuntime:
    """Scheduler-independent bookkeeping for one stage."""

    def __init__(self, stage: Stage, inbox_put, tick_interval: float, clock):
        self.stage = stage
        self.inbox_put = inbox_put
        self.open_inputs = sum(p.connected for p in stage.inputs)
        self.failed = False
        self.terminated = False
        self.failure: StageFailure | None = None
        self.clock = clock
        self.tick_interval_ns = int(tick_interval * 1e9)
        self.last_tick = clock()

    @staticmethod
    def deliver(port_map) -> Callable[[int, Any], None]:
        def sink(port: int, item) -> None:
            for rt, inp in port_map[port]:
                rt.inbox_put((inp, item))

        return sink

    def handle(self, port: InputPort, item) -> None:
        stage = self.stage
        if item is END_OF_STREAM:
            self.open_inputs -= 1
            if self.open_inputs == 0:
                self.terminate()
            return
        stage.elements_in += 1
        if self.failed:
            return
        try:
            stage.on_element(port, item)
        except Exception as exc:
            self.fail(exc)
        self.maybe_tick()

    def maybe_tick(self, force: bool = False) -> None:
        if self.failed or self.terminated:
            return
        now = self.clock()
        if force or now - self.last_tick >= self.tick_interval_ns:
            self.last_tick = now
            try:
                self.stage.on_tick(now)
            except Exception as exc:
                self.fail(exc)

    def fail(self, exc: BaseException) -> None:
        self.failed = True
        self.failure = StageFailure(self.stage.name, self.stage.elements_in, exc, traceback.format_exc())
        log.error("stage %s failed: %s", self.stage.name, exc)

    def terminate(self) -> None:
        if self.terminated:
            return
        if not self.failed:
            try:
                self.stage.on_terminate()
            except Exception as exc:
                self.fail(exc)
        self.terminated = True
        for out_index in range(len(self.stage.outputs)):
            self.stage._sink(out_index, END_OF_STREAM)


class Pipeline:
    """A DAG of stages."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, tick_interval: float = DEFAULT_TICK_INTERVAL):
        self.capacity = capacity
        self.tick_interval = tick_interval
        self.stages: list[Stage] = []
        self.edges: list[Edge] = []
        self._running: _ThreadedRun | None = None

    def add(self, *stages: Stage) -> Pipeline:
        for stage in stages:
            if stage in self.stages:
                continue
            if any(s.name == stage.name for s in self.stages):
                raise PipelineError(f"duplicate stage name {stage.name!r}")
            self.stages.append(stage)
        return self

    def connect(self, out: OutputPort, inp: InputPort) -> Edge:
        self.add(out.stage, inp.stage)
        edge = connect(out, inp)
        self.edges.append(edge)
        try:
            self.topological_order()
        except CycleError:
            out.targets.remove(inp)
            inp.connected -= 1
            self.edges.remove(edge)
            raise
        return edge

    def chain(self, *stages: Stage) -> Pipeline:
        for up, down in zip(stages, stages[1:]):
            self.connect(up.output, down.input)
        return self

    def topological_order(self) -> list[Stage]:
        indegree = {s: 0 for s in self.stages}
        for edge in self.edges:
            indegree[edge.target.stage] += 1
        ready = collections.deque(s for s in self.stages if indegree[s] == 0)
        order = []
        while ready:
            stage = ready.popleft()
            order.append(stage)
            for out in stage.outputs:
                for inp in out.targets:
                    indegree[inp.stage] -= 1
                    if indegree[inp.stage] == 0:
                        ready.append(inp.stage)
        if len(order) != len(self.stages):
            raise CycleError("pipeline contains a cycle")
        return order

    def _validate(self) -> list[Stage]:
        order = self.topological_order()
        if not any(isinstance(s, SourceStage) for s in self.stages):
            raise PipelineError("pipeline has no source stage")
        for stage in self.stages:
            if not isinstance(stage, SourceStage) and not stage.inputs:
                raise PipelineError(f"stage {stage.name} has no inputs")
            for port in stage.inputs:
                if not port.connected:
                    raise PipelineError(f"{port!r} is not connected")
        return order

    def _wire(self, runtimes: dict[Stage, _StageRuntime]) -> None:
        for stage, rt in runtimes.items():
            port_map = [[(runtimes[inp.stage], inp) for inp in out.targets] for out in stage.outputs]
            stage._sink = rt.deliver(port_map)

    def run(self, mode: str = "threaded", clock: Callable[[], int] = time.monotonic_ns) -> TerminationReport:
        if mode == "threaded":
            return self.start(clock).join()
        if mode == "sync":
            return self._run_sync(clock)
        raise ValueError(f"unknown scheduler mode {mode!r}")

    def start(self, clock: Callable[[], int] = time.monotonic_ns) -> _ThreadedRun:
        order = self._validate()
        run = _ThreadedRun(self, order, clock)
        run.start()
        self._running = run
        return run

    def _run_sync(self, clock) -> TerminationReport:
        order = self._validate()
        inboxes: dict[Stage, collections.deque] = {s: collections.deque() for s in order}
        runtimes = {
            s: _StageRuntime(s, inboxes[s].append, self.tick_interval, clock) for s in order
        }
        self._wire(runtimes)
        sources: dict[Stage, Iterator] = {}
        for stage in order:
            stage.on_start()
            if isinstance(stage, SourceStage):
                sources[stage] = iter(stage.generate())

        while True:
            progressed = False
            for stage in order:
                rt = runtimes[stage]
                if stage in sources:
                    if rt.terminated:
                        continue
                    progressed = True
                    try:
                        item = next(sources[stage])
                    except StopIteration:
                        rt.terminate()
                        continue
                    except Exception as exc:
                        rt.fail(exc)
                        rt.terminate()
                        continue
                    stage.emit(item)
                    rt.maybe_tick()
                    continue
                inbox = inboxes[stage]
                if inbox:
                    progressed = True
                    port, item = inbox.popleft()
                    rt.handle(port, item)
                else:
                    rt.maybe_tick()
            if not progressed:
                break
        return _report(order, runtimes)


def _report(order, runtimes) -> TerminationReport:
    report = TerminationReport()
    for stage in order:
        report.counts[stage.name] = StageCounts(stage.elements_in, stage.elements_out, stage.dropped)
        failure = runtimes[stage].failure
        if failure is not None:
            report.errors.append(failure)
    return report


class _ThreadedRun:
    """Handle of a pipeline running one thread per stage."""

    def __init__(self, pipeline: Pipeline, order: list[Stage], clock):
        self.pipeline = pipeline
        self.order = order
        self.clock = clock
        self.inboxes = {s: queue.Queue(maxsize=pipeline.capacity) for s in order}
        self.runtimes = {
            s: _StageRuntime(s, self.inboxes[s].put, pipeline.tick_interval, clock) for s in order
        }
        pipeline._wire(self.runtimes)
        self.threads: list[threading.Thread] = []

    def start(self) -> None:
        for stage in self.order:
            stage.on_start()
        for stage in self.order:
            target = self._source_loop if isinstance(stage, SourceStage) else self._stage_loop
            thread = threading.Thread(target=target, args=(stage,), name=f"stage-{stage.name}", daemon=True)
            self.threads.append(thread)
            thread.start()

    def _source_loop(self, stage: SourceStage) -> None:
        rt = self.runtimes[stage]
        try:
            for item in stage.generate():
                stage.emit(item)
                rt.maybe_tick()
        except Exception as exc:
            rt.fail(exc)
        rt.terminate()

    def _stage_loop(self, stage: Stage) -> None:
        rt = self.runtimes[stage]
        inbox = self.inboxes[stage]
        timeout = self.pipeline.tick_interval
        while not rt.terminated:
            try:
                port, item = inbox.get(timeout=timeout)
            except queue.Empty:
                rt.maybe_tick()
                continue
            rt.handle(port, item)

    @property
    def alive(self) -> bool:
        return any(t.is_alive() for t in self.threads)

    def join(self, timeout: float | None = None) -> TerminationReport:
        deadline = None if timeout is None else time.monotonic() + timeout
        for thread in self.threads:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            thread.join(remaining)
        if self.alive:
            raise TimeoutError("pipeline did not terminate in time")
        return _report(self.order, self.runtimes)
