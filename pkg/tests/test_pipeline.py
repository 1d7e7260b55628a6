import random

import pytest

from otelbridge.errors import CycleError, PipelineError, TypeMismatch
from otelbridge.pipeline import CollectSink, IterableSource, MapStage, Pipeline, Stage, connect

MODES = ["sync", "threaded"]


def identity_chain(n_stages, items, capacity=1024):
    p = Pipeline(capacity=capacity)
    source = IterableSource(items, int, "src")
    stages = [MapStage(lambda x: x, int, int, f"id{i}") for i in range(n_stages)]
    sink = CollectSink(int, "sink")
    p.chain(source, *stages, sink)
    return p, sink


@pytest.mark.parametrize("mode", MODES)
def test_identity_chain_of_five_preserves_order(mode):
    items = list(range(500))
    p, sink = identity_chain(5, items, capacity=4)
    report = p.run(mode)
    assert sink.items == items
    assert report.ok
    for i in range(5):
        assert report.counts[f"id{i}"].elements_in == 500
        assert report.counts[f"id{i}"].elements_out == 500


@pytest.mark.parametrize("mode", MODES)
def test_empty_source(mode):
    p, sink = identity_chain(3, [])
    report = p.run(mode)
    assert sink.items == []
    assert report.ok
    assert all(c.elements_in == 0 and c.elements_out == 0 for c in report.counts.values())


def test_type_mismatch_on_connect():
    src = IterableSource([], int)
    sink = CollectSink(str)
    with pytest.raises(TypeMismatch):
        connect(src.output, sink.input)


def test_subclass_output_fits_base_input():
    class Base: ...

    class Derived(Base): ...

    src = IterableSource([], Derived)
    sink = CollectSink(Base)
    connect(src.output, sink.input)
    with pytest.raises(TypeMismatch):
        connect(IterableSource([], (Derived, int)).output, CollectSink(Base).input)


def test_cycle_rejected():
    p = Pipeline()
    a = MapStage(lambda x: x, name="a")
    b = MapStage(lambda x: x, name="b")
    p.connect(a.output, b.input)
    with pytest.raises(CycleError):
        p.connect(b.output, a.input)
    assert len(p.edges) == 1


def test_pipeline_needs_a_source():
    p = Pipeline()
    a = MapStage(lambda x: x, name="a")
    b = CollectSink(name="b")
    p.connect(a.output, b.input)
    with pytest.raises(PipelineError):
        p.run("sync")


class FailOn(Stage):
    def __init__(self, n, name="fail"):
        super().__init__(name)
        self.n = n
        self.add_input(int)
        self.add_output(int)

    def on_element(self, port, item):
        if self.elements_in == self.n:
            raise RuntimeError(f"boom at {item}")
        self.emit(item)


@pytest.mark.parametrize("mode", MODES)
def test_stage_failure_is_reported_and_pipeline_terminates(mode):
    p = Pipeline(capacity=2)
    src = IterableSource(range(10), int, "src")
    fail = FailOn(3)
    sink = CollectSink(int, "sink")
    p.chain(src, fail, sink)
    report = p.run(mode)
    assert len(report.errors) == 1
    assert report.errors[0].stage == "fail"
    assert report.errors[0].element_index == 3
    assert sink.items == [0, 1]
    # the failed stage keeps draining its inbox so upstream never blocks
    assert report.counts["fail"].elements_in == 10
    assert report.counts["src"].elements_out == 10


@pytest.mark.parametrize("mode", MODES)
def test_dropping_stage_conserves_counts(mode):
    p = Pipeline()
    src = IterableSource(range(100), int, "src")
    evens = MapStage(lambda x: x if x % 2 == 0 else None, int, int, "evens")
    sink = CollectSink(int, "sink")
    p.chain(src, evens, sink)
    report = p.run(mode)
    c = report.counts["evens"]
    assert c.elements_out == c.elements_in - c.dropped == 50
    assert sink.items == list(range(0, 100, 2))


class Tagger(Stage):
    """Forwards ``(seed, value)`` tuples to every output."""

    def __init__(self, name, n_in, n_out):
        super().__init__(name)
        for i in range(n_in):
            self.add_input(object, f"in{i}")
        for i in range(n_out):
            self.add_output(object, f"out{i}")

    def on_element(self, port, item):
        for i in range(len(self.outputs)):
            self.emit(item, i)


def random_dag(rng):
    """Random layered DAG; output ports fan out to several targets."""
    n = rng.randint(2, 7)
    p = Pipeline(capacity=rng.choice([1, 2, 8]))
    n_sources = rng.randint(1, min(2, n - 1))
    counts = [rng.randint(0, 60) for _ in range(n_sources)]
    ups = {j: sorted(rng.sample(range(j), rng.randint(1, min(3, j)))) for j in range(n_sources, n)}
    stages = [IterableSource([(i, k) for k in range(c)], object, f"s{i}") for i, c in enumerate(counts)]
    stages += [Tagger(f"t{j}", len(ups[j]), 1) for j in range(n_sources, n)]
    for j, us in ups.items():
        for k, u in enumerate(us):
            p.connect(stages[u].output, stages[j].inputs[k])
    for stage in stages:  # stages without consumers still need their output wired
        if not stage.output.targets:
            p.connect(stage.output, CollectSink(name=f"sink-{stage.name}").input)
    # arrivals = items times number of distinct source-to-stage paths
    arrivals = dict(enumerate(counts))
    for j in range(n_sources, n):
        arrivals[j] = sum(arrivals[u] for u in ups[j])
    return p, {f"t{j}": arrivals[j] for j in range(n_sources, n)}


@pytest.mark.parametrize("mode", MODES)
def test_random_dags_terminate_with_expected_counts(mode):
    rng = random.Random(2024)
    for _ in range(60 if mode == "sync" else 25):
        p, expected = random_dag(rng)
        report = p.run(mode) if mode == "sync" else p.start().join(timeout=30)
        assert report.ok
        for name, n in expected.items():
            assert report.counts[name].elements_in == n


def test_fifo_per_edge_with_fan_in():
    p = Pipeline(capacity=3)
    a = IterableSource([("a", i) for i in range(300)], name="a")
    b = IterableSource([("b", i) for i in range(300)], name="b")
    merge = Tagger("merge", 2, 1)
    sink = CollectSink(name="sink")
    p.connect(a.output, merge.inputs[0])
    p.connect(b.output, merge.inputs[1])
    p.connect(merge.output, sink.input)
    p.run("threaded")
    for tag in "ab":
        assert [i for t, i in sink.items if t == tag] == list(range(300))


class Ticker(Stage):
    def __init__(self):
        super().__init__("ticker")
        self.add_input(int)
        self.ticks = []
        self.terminated = 0

    def on_element(self, port, item):
        pass

    def on_tick(self, now_ns):
        self.ticks.append(now_ns)

    def on_terminate(self):
        self.terminated += 1


def test_sync_mode_ticks_with_injected_clock():
    now = [0]

    def clock():
        now[0] += 30_000_000  # 30 ms per reading
        return now[0]

    p = Pipeline(tick_interval=0.05)
    ticker = Ticker()
    p.chain(IterableSource(range(20), int, "src"), ticker)
    p.run("sync", clock=clock)
    assert ticker.ticks and ticker.ticks == sorted(ticker.ticks)
    assert ticker.terminated == 1


def test_termination_happens_once_with_multiple_inputs():
    p = Pipeline()
    ticker = Ticker()
    ticker.add_input(int, "in2")
    p.connect(IterableSource(range(3), int, "a").output, ticker.inputs[0])
    p.connect(IterableSource(range(3), int, "b").output, ticker.inputs[1])
    p.run("threaded")
    assert ticker.terminated == 1
    assert ticker.elements_in == 6
