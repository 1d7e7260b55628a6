"""Record data model, string registry and operation signatures.

All timestamps are nanoseconds since the Unix epoch. Record values are
immutable and may be handed between threads freely.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

from .errors import MalformedSignature, NegativeId, RebindConflict, UnknownId


class StringRegistry:
    """Integer -> string table owned by a single connection.

    Bindings are write-once: an id bound to one string can never be rebound
    to another. The reverse index makes :meth:`intern` O(1) for encoders.
    """

    __slots__ = ("_by_id", "_by_value", "_next_id")

    def __init__(self) -> None:
        self._by_id: dict[int, str] = {}
        self._by_value: dict[str, int] = {}
        self._next_id = 0

    def bind(self, id_: int, value: str) -> StringRegistry:
        if id_ < 0:
            raise NegativeId(id_)
        bound = self._by_id.get(id_)
        if bound is not None:
            if bound != value:
                raise RebindConflict(id_, bound, value)
            return self
        self._by_id[id_] = value
        self._by_value.setdefault(value, id_)
        if id_ >= self._next_id:
            self._next_id = id_ + 1
        return self

    def resolve(self, id_: int) -> str:
        try:
            return self._by_id[id_]
        except KeyError:
            raise UnknownId(id_) from None

    def intern(self, value: str) -> tuple[int, bool]:
        """Return ``(id, created)`` for *value*, allocating a fresh id if needed."""
        id_ = self._by_value.get(value)
        if id_ is not None:
            return id_, False
        id_ = self._next_id
        self.bind(id_, value)
        return id_, True

    def __contains__(self, id_: object) -> bool:
        return id_ in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def items(self):
        return self._by_id.items()


def registry_bind(registry: StringRegistry, id_: int, value: str) -> StringRegistry:
    return registry.bind(id_, value)


def registry_resolve(registry: StringRegistry, id_: int) -> str:
    return registry.resolve(id_)


# ---------------------------------------------------------------------------
# Monitoring records


class MonitoringRecord:
    """Common base of every record kind that travels on the wire."""

    __slots__ = ()
    logging_timestamp: int


@dataclass(frozen=True, slots=True)
class OperationExecutionRecord(MonitoringRecord):
    logging_timestamp: int
    operation_signature: str
    session_id: str
    trace_id: int
    tin: int
    tout: int
    hostname: str
    eoi: int
    ess: int


@dataclass(frozen=True, slots=True)
class BeforeOperationEvent(MonitoringRecord):
    logging_timestamp: int
    timestamp: int
    trace_id: int
    order_index: int
    operation_signature: str
    class_signature: str


@dataclass(frozen=True, slots=True)
class AfterOperationEvent(MonitoringRecord):
    logging_timestamp: int
    timestamp: int
    trace_id: int
    order_index: int
    operation_signature: str
    class_signature: str


@dataclass(frozen=True, slots=True)
class TraceMetadataRecord(MonitoringRecord):
    logging_timestamp: int
    trace_id: int
    thread_id: int
    session_id: str
    hostname: str
    parent_trace_id: int = -1
    parent_order_id: int = -1


RECORD_TYPES: tuple[type[MonitoringRecord], ...] = (
    OperationExecutionRecord,
    BeforeOperationEvent,
    AfterOperationEvent,
    TraceMetadataRecord,
)


# ---------------------------------------------------------------------------
# Operation signatures

MODIFIERS = frozenset(
    {
        "public",
        "private",
        "protected",
        "static",
        "final",
        "abstract",
        "synchronized",
        "native",
        "default",
    }
)


@dataclass(frozen=True, slots=True)
class OperationSignature:
    modifiers: tuple[str, ...]
    return_type: str
    package_name: str
    class_name: str
    method_name: str
    parameter_types: tuple[str, ...] = field(default=())

    @property
    def fq_class_name(self) -> str:
        if self.package_name:
            return f"{self.package_name}.{self.class_name}"
        return self.class_name

    def render(self) -> str:
        head = list(self.modifiers)
        if self.return_type:
            head.append(self.return_type)
        head.append(f"{self.fq_class_name}.{self.method_name}")
        return " ".join(head) + "(" + ", ".join(self.parameter_types) + ")"

    def __str__(self) -> str:
        return self.render()


@functools.lru_cache(maxsize=65536)
def parse_signature(text: str) -> OperationSignature:
    """Parse ``[modifier ...] [returnType] <fq-class>.<method>(<params>)``.

    >>> parse_signature("public void org.foo.Bar.baz(int)").class_name
    'Bar'
    """
    lparen = text.find("(")
    rparen = text.rfind(")")
    if lparen < 0 or rparen < lparen:
        raise MalformedSignature(text, "missing parameter list")
    tokens = text[:lparen].split()
    if not tokens:
        raise MalformedSignature(text, "missing operation name")
    qualified = tokens.pop()
    dot = qualified.rfind(".")
    if dot <= 0 or dot == len(qualified) - 1:
        raise MalformedSignature(text, "operation name is not class-qualified")
    fq_class, method = qualified[:dot], qualified[dot + 1 :]
    package, _, class_name = fq_class.rpartition(".")
    if not class_name:
        raise MalformedSignature(text, "empty class name")

    n_mod = 0
    while n_mod < len(tokens) and tokens[n_mod] in MODIFIERS:
        n_mod += 1
    modifiers = tuple(tokens[:n_mod])
    return_type = " ".join(tokens[n_mod:])

    inner = text[lparen + 1 : rparen].strip()
    params = tuple(p.strip() for p in inner.split(",")) if inner else ()
    return OperationSignature(modifiers, return_type, package, class_name, method, params)
