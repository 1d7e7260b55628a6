"""Synthetic probe emitter.

Stands in for instrumented applications: generates well-nested call trees
over a small microservice topology and writes them as monitoring records,
exactly as a TCP writer inside those applications would. The default
topology is a five-service web shop (web UI, auth, persistence, image
provider and recommender). Output is a pure function of the scenario,
seed included.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator

from ..records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    MonitoringRecord,
    OperationExecutionRecord,
    TraceMetadataRecord,
)
from ..wire import StringRegistry, encode_frame, send_records


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    operations: tuple[str, ...]
    calls: tuple[str, ...] = ()  # services this one may call


_P = "tools.descartes.teastore"

DEFAULT_SERVICES = (
    ServiceSpec(
        "webui",
        (
            f"public void {_P}.webui.servlet.HomeServlet.handleGETRequest(javax.servlet.http.HttpServletRequest, javax.servlet.http.HttpServletResponse)",
            f"public void {_P}.webui.servlet.CategoryServlet.handleGETRequest(javax.servlet.http.HttpServletRequest, javax.servlet.http.HttpServletResponse)",
            f"public void {_P}.webui.servlet.ProductServlet.handleGETRequest(javax.servlet.http.HttpServletRequest, javax.servlet.http.HttpServletResponse)",
            f"protected void {_P}.webui.servlet.AbstractUIServlet.checkforCookie(javax.servlet.http.HttpServletRequest, javax.servlet.http.HttpServletResponse)",
            f"public static java.lang.String {_P}.webui.servlet.elhelper.ELHelperUtils.formatToMoney(long)",
        ),
        ("auth", "persistence", "image", "recommender"),
    ),
    ServiceSpec(
        "auth",
        (
            f"public javax.ws.rs.core.Response {_P}.auth.rest.AuthUserActionsRest.isLoggedIn({_P}.entities.message.SessionBlob)",
            f"public javax.ws.rs.core.Response {_P}.auth.rest.AuthCartRest.addProductToCart({_P}.entities.message.SessionBlob, long)",
            f"public boolean {_P}.auth.security.ShaSecurityProvider.validate({_P}.entities.message.SessionBlob)",
            f"private java.lang.String {_P}.auth.security.ShaSecurityProvider.blobToString({_P}.entities.message.SessionBlob)",
        ),
        ("persistence",),
    ),
    ServiceSpec(
        "persistence",
        (
            f"public java.util.List {_P}.persistence.rest.CategoryEndpoint.listAll(int, int)",
            f"public java.util.List {_P}.persistence.rest.ProductEndpoint.listAllForCategory(long, int, int)",
            f"public {_P}.entities.Product {_P}.persistence.rest.ProductEndpoint.findById(long)",
            f"public java.util.List {_P}.persistence.repository.CategoryRepository.getAllEntities(int, int)",
            f"public {_P}.persistence.domain.ProductDB {_P}.persistence.repository.ProductRepository.getEntity(long)",
        ),
    ),
    ServiceSpec(
        "image",
        (
            f"public java.util.HashMap {_P}.image.rest.ImageProviderEndpoint.getProductImages(java.util.HashMap)",
            f"public java.lang.String {_P}.image.ImageProvider.getImageFor(java.lang.Long, {_P}.image.ImageSize)",
            f"public {_P}.image.StoreImage {_P}.image.cache.LastRecentlyUsedCache.getData(long)",
        ),
    ),
    ServiceSpec(
        "recommender",
        (
            f"public java.util.List {_P}.recommender.rest.RecommendEndpoint.recommend(java.util.List, java.lang.Long)",
            f"public java.util.List {_P}.recommender.algorithm.AbstractRecommender.recommendProducts(java.lang.Long, java.util.List)",
            f"protected java.util.List {_P}.recommender.algorithm.impl.pop.PopularityBasedRecommender.execute(java.lang.Long, java.util.List)",
        ),
        ("persistence",),
    ),
)


@dataclass(frozen=True)
class ScenarioConfig:
    traces: int = 10
    max_depth: int = 3
    max_fanout: int = 3
    seed: int = 0
    services: tuple[ServiceSpec, ...] = DEFAULT_SERVICES
    record_kind: str = "oer"  # or "events"
    first_trace_id: int = 1
    start_ns: int = 1_700_000_000_000_000_000
    sessions: int = 16

    def __post_init__(self) -> None:
        if self.traces < 0 or self.max_depth < 1 or self.max_fanout < 0:
            raise ValueError("traces >= 0, max_depth >= 1 and max_fanout >= 0 are required")
        if self.record_kind not in ("oer", "events"):
            raise ValueError(f"unknown record kind {self.record_kind!r}")
        if not self.services:
            raise ValueError("at least one service is required")


@dataclass
class _Call:
    service: str
    signature: str
    depth: int
    children: list[_Call] = field(default_factory=list)
    eoi: int = 0
    tin: int = 0
    tout: int = 0


@dataclass(frozen=True)
class SyntheticTrace:
    trace_id: int
    records: tuple[MonitoringRecord, ...]
    executions: int
    services: frozenset[str]


@dataclass
class EmitReport:
    traces: int = 0
    records: int = 0
    executions: int = 0
    bytes_sent: int = 0


class _Generator:
    def __init__(self, scenario: ScenarioConfig):
        self.s = scenario
        self.rng = random.Random(scenario.seed)
        self.by_name = {svc.name: svc for svc in scenario.services}

    def _call(self, service: str, depth: int) -> _Call:
        svc = self.by_name[service]
        return _Call(service, self.rng.choice(svc.operations), depth)

    def _grow(self, node: _Call) -> None:
        if node.depth + 1 >= self.s.max_depth:
            return
        svc = self.by_name[node.service]
        for _ in range(self.rng.randint(0, self.s.max_fanout)):
            targets = [c for c in svc.calls if c in self.by_name]
            if targets and self.rng.random() < 0.4:
                target = self.rng.choice(targets)
            else:
                target = node.service
            child = self._call(target, node.depth + 1)
            node.children.append(child)
            self._grow(child)

    def tree(self) -> _Call:
        root_service = self.s.services[0]
        root = self._call(root_service.name, 0)
        if self.s.max_depth >= 2:
            # a page render touches every backend the front end talks to
            for target in root_service.calls:
                if target in self.by_name:
                    child = self._call(target, 1)
                    root.children.append(child)
                    self._grow(child)
        self._grow(root)
        return root

    def _timing(self, node: _Call, start: int) -> int:
        rng = self.rng
        node.tin = start
        t = start + rng.randint(5_000, 200_000)
        for child in node.children:
            t = self._timing(child, t + rng.randint(1_000, 50_000))
        node.tout = t + rng.randint(10_000, 2_000_000)
        return node.tout

    def traces(self) -> Iterator[SyntheticTrace]:
        s = self.s
        clock = s.start_ns
        for i in range(s.traces):
            trace_id = s.first_trace_id + i
            root = self.tree()
            order = _preorder(root)
            for eoi, node in enumerate(order):
                node.eoi = eoi
            clock += self.rng.randint(100_000, 5_000_000)
            end = self._timing(root, clock)
            clock = end
            session = f"session-{self.rng.randrange(s.sessions):04d}"
            if s.record_kind == "oer":
                records = tuple(
                    OperationExecutionRecord(
                        n.tout, n.signature, session, trace_id, n.tin, n.tout, n.service, n.eoi, n.depth
                    )
                    for n in _postorder(root)
                )
            else:
                records = self._events(root, trace_id, session, i)
            yield SyntheticTrace(trace_id, records, len(order), frozenset(n.service for n in order))

    def _events(self, root: _Call, trace_id: int, session: str, thread_id: int) -> tuple:
        out: list[MonitoringRecord] = [
            TraceMetadataRecord(root.tin, trace_id, thread_id, session, root.service, -1, -1)
        ]
        order_index = 0

        def walk(node: _Call) -> None:
            nonlocal order_index
            cls = node.signature[: node.signature.index("(")].split()[-1].rpartition(".")[0]
            out.append(BeforeOperationEvent(node.tin, node.tin, trace_id, order_index, node.signature, cls))
            order_index += 1
            for child in node.children:
                walk(child)
            out.append(AfterOperationEvent(node.tout, node.tout, trace_id, order_index, node.signature, cls))
            order_index += 1

        walk(root)
        return tuple(out)


def _preorder(node: _Call) -> list[_Call]:
    out, stack = [], [node]
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(reversed(n.children))
    return out


def _postorder(node: _Call) -> Iterator[_Call]:
    for child in node.children:
        yield from _postorder(child)
    yield node


def generate_traces(scenario: ScenarioConfig) -> Iterator[SyntheticTrace]:
    return _Generator(scenario).traces()


def generate_records(scenario: ScenarioConfig) -> Iterator[MonitoringRecord]:
    for trace in generate_traces(scenario):
        yield from trace.records


def encode_scenario(scenario: ScenarioConfig) -> bytes:
    """The exact byte stream :func:`emit_synthetic` would put on the wire."""
    registry = StringRegistry()
    return b"".join(encode_frame(r, registry) for r in generate_records(scenario))


def emit_synthetic(scenario: ScenarioConfig, target: tuple[str, int]) -> EmitReport:
    report = EmitReport()

    def records():
        for trace in generate_traces(scenario):
            report.traces += 1
            report.executions += trace.executions
            report.records += len(trace.records)
            yield from trace.records

    report.bytes_sent = send_records(records(), target)
    return report
