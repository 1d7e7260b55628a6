"""Reference generators and oracles shared by the test modules.

Everything here is deliberately written independently of the package's
algorithms: traces are generated as explicit trees, and parent / eoi / ess
expectations come from the tree or from a plain stack simulation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from otelbridge.records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    OperationExecutionRecord,
    TraceMetadataRecord,
    parse_signature,
)
from otelbridge.transform import Execution

PACKAGES = ["", "a", "org.foo", "tools.descartes.teastore.persistence.rest", "x.y.z.w"]
CLASSES = ["Bar", "B", "CategoryEndpoint", "Foo$Inner", "Q"]
METHODS = ["baz", "c", "listAll", "<init>", "run", "get"]
TYPES = ["int", "long", "java.lang.String", "java.util.List", "byte[]", "boolean"]
MODIFIER_POOL = ["public", "private", "protected", "static", "final", "synchronized"]


def random_signature(rng: random.Random) -> str:
    mods = sorted(rng.sample(MODIFIER_POOL, rng.randint(0, 2)), key=MODIFIER_POOL.index)
    ret = rng.choice(["", "void", "int", "java.util.List"])
    pkg = rng.choice(PACKAGES)
    fq = f"{pkg}.{rng.choice(CLASSES)}" if pkg else rng.choice(CLASSES)
    params = ", ".join(rng.choice(TYPES) for _ in range(rng.randint(0, 3)))
    head = " ".join([*mods, *([ret] if ret else []), f"{fq}.{rng.choice(METHODS)}"])
    return f"{head}({params})"


@dataclass
class Node:
    signature: str
    depth: int
    children: list["Node"] = field(default_factory=list)
    index: int = -1  # pre-order position
    parent: int | None = None
    tin: int = 0
    tout: int = 0


# operation names for generated trees; drawing from a fixed pool keeps generation cheap
SIGNATURE_POOL = [random_signature(random.Random(i)) for i in range(400)]


def random_tree(rng: random.Random, max_depth: int = 10, max_size: int = 200) -> list[Node]:
    """A random call tree, returned in pre-order with timing filled in."""
    target = rng.randint(1, max_size)
    root = Node(rng.choice(SIGNATURE_POOL), 0)
    nodes = [root]
    candidates = [root] if max_depth > 1 else []
    while len(nodes) < target and candidates:
        p = rng.choice(candidates)
        child = Node(rng.choice(SIGNATURE_POOL), p.depth + 1)
        p.children.append(child)
        nodes.append(child)
        if child.depth < max_depth - 1:
            candidates.append(child)

    order: list[Node] = []

    def visit(n: Node, parent: int | None) -> None:
        n.index = len(order)
        n.parent = parent
        order.append(n)
        for c in n.children:
            visit(c, n.index)

    visit(root, None)

    def timing(n: Node, t: int) -> int:
        n.tin = t
        t += rng.randrange(101)
        for c in n.children:
            t = timing(c, t + rng.randrange(11))
        n.tout = t + rng.randrange(101)
        return n.tout

    timing(root, rng.randint(0, 10**6))
    return order


def tree_executions(order: list[Node], trace_id: int, host: str = "h", session: str = "s") -> list[Execution]:
    return [
        Execution(parse_signature(n.signature), host, session, trace_id, n.tin, n.tout, n.index, n.depth)
        for n in order
    ]


def tree_oers(order: list[Node], trace_id: int, host: str = "h", session: str = "s") -> list[OperationExecutionRecord]:
    """OERs of a tree in completion (post-) order, as a probe would write them."""
    out = []

    def post(n: Node) -> None:
        for c in n.children:
            post(c)
        out.append(OperationExecutionRecord(n.tout, n.signature, session, trace_id, n.tin, n.tout, host, n.index, n.depth))

    post(order[0])
    return out


def tree_events(order: list[Node], trace_id: int, with_metadata: bool = True) -> list:
    out = []
    if with_metadata:
        out.append(TraceMetadataRecord(order[0].tin, trace_id, 1, "sess", "host", -1, -1))
    counter = [0]

    def walk(n: Node) -> None:
        cls = n.signature.split("(")[0].split()[-1].rpartition(".")[0]
        out.append(BeforeOperationEvent(n.tin, n.tin, trace_id, counter[0], n.signature, cls))
        counter[0] += 1
        for c in n.children:
            walk(c)
        out.append(AfterOperationEvent(n.tout, n.tout, trace_id, counter[0], n.signature, cls))
        counter[0] += 1

    walk(order[0])
    return out


def stack_parents(ess_values: list[int]) -> list[int | None]:
    """Replay an eoi-sorted ess sequence through an explicit call stack."""
    stack: list[int] = []
    parents: list[int | None] = []
    for i, ess in enumerate(ess_values):
        if ess > len(stack):
            raise ValueError(f"ess {ess} at {i} skips a level")
        del stack[ess:]
        parents.append(stack[-1] if stack else None)
        stack.append(i)
    return parents


def stack_eoi_ess(events) -> list[tuple[int, int, str]]:
    """Simulate before/after events; return (eoi, ess, signature) in completion order."""
    stack: list[tuple[int, int, str]] = []
    counter = 0
    done = []
    for e in events:
        if isinstance(e, BeforeOperationEvent):
            stack.append((counter, len(stack), e.operation_signature))
            counter += 1
        elif isinstance(e, AfterOperationEvent):
            done.append(stack.pop())
    return done


MUTATIONS = ("delete", "duplicate_after", "change_signature")


def mutate(rng: random.Random, events: list, kind: str) -> list:
    """Apply one balance-breaking change to an event sequence (metadata first)."""
    head, body = events[:1], list(events[1:])
    befores = [i for i, e in enumerate(body) if isinstance(e, BeforeOperationEvent)]
    afters = [i for i, e in enumerate(body) if isinstance(e, AfterOperationEvent)]
    if kind == "delete":
        del body[rng.choice(befores + afters)]
    elif kind == "duplicate_after":
        i = rng.choice(afters)
        body.insert(i + 1, body[i])
    elif kind == "change_signature":
        i = rng.choice(afters)
        e = body[i]
        body[i] = AfterOperationEvent(
            e.logging_timestamp, e.timestamp, e.trace_id, e.order_index, e.operation_signature + "#", e.class_signature
        )
    else:
        raise ValueError(kind)
    return head + body


def random_record(rng: random.Random):
    """A random record of any of the four kinds, with in-range field values."""
    i64 = lambda: rng.randint(-(2**63), 2**63 - 1)  # noqa: E731
    i32 = lambda: rng.randint(-(2**31), 2**31 - 1)  # noqa: E731
    ts = lambda: rng.randint(0, 2**63 - 1)  # noqa: E731
    text = lambda: rng.choice(["", "host-1", "sess", "ünïcødé ✓", random_signature(rng)])  # noqa: E731
    kind = rng.randrange(4)
    if kind == 0:
        return OperationExecutionRecord(ts(), random_signature(rng), text(), i64(), ts(), ts(), text(), i32(), i32())
    if kind == 1:
        return BeforeOperationEvent(ts(), ts(), i64(), i32(), random_signature(rng), text())
    if kind == 2:
        return AfterOperationEvent(ts(), ts(), i64(), i32(), random_signature(rng), text())
    return TraceMetadataRecord(ts(), i64(), i64(), text(), text(), i64(), i32())
