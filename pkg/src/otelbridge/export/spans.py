"""Exporter-neutral spans and the execution-trace -> span mapping."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..reconstruct import ExecutionTrace, parent_indices
from ..transform import NO_SESSION

MASK64 = (1 << 64) - 1
UNKNOWN_SERVICE = "unknown_service"


def derive_trace_id(kieker_trace_id: int) -> bytes:
    """Zero-extend a non-negative 64-bit trace id to 16 big-endian bytes."""
    if kieker_trace_id < 0:
        raise ValueError(f"trace id must be non-negative, got {kieker_trace_id}")
    return kieker_trace_id.to_bytes(16, "big")


def derive_span_id(kieker_trace_id: int, eoi: int) -> bytes:
    if eoi < 0:
        raise ValueError(f"eoi must be non-negative, got {eoi}")
    x = kieker_trace_id & MASK64
    rotated = ((x << 32) | (x >> 32)) & MASK64
    value = rotated ^ ((eoi + 1) & MASK64)
    return (value or 1).to_bytes(8, "big")


@dataclass(frozen=True)
class Span:
    trace_id: bytes
    span_id: bytes
    parent_span_id: bytes | None
    name: str
    start_ns: int
    end_ns: int
    attributes: dict[str, str]
    service_name: str

    @property
    def trace_id_hex(self) -> str:
        return self.trace_id.hex()

    @property
    def span_id_hex(self) -> str:
        return self.span_id.hex()

    @property
    def parent_span_id_hex(self) -> str | None:
        return self.parent_span_id.hex() if self.parent_span_id is not None else None


@dataclass
class SpanBatch:
    """Spans bound for one export call, in eoi order per trace."""

    spans: list[Span] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)

    def extend(self, other: SpanBatch) -> None:
        self.spans.extend(other.spans)

    def groups(self) -> dict[str, list[Span]]:
        """Spans grouped by service name, groups in order of first appearance."""
        out: dict[str, list[Span]] = {}
        for span in self.spans:
            out.setdefault(span.service_name, []).append(span)
        return out

    @staticmethod
    def resource_attributes(service_name: str) -> dict[str, str]:
        return {"service.name": service_name}

    def dangling_parents(self) -> list[Span]:
        """Spans whose parent is not part of this batch (should be empty)."""
        known = {(s.trace_id, s.span_id) for s in self.spans}
        return [
            s for s in self.spans if s.parent_span_id is not None and (s.trace_id, s.parent_span_id) not in known
        ]


def map_trace(t: ExecutionTrace) -> SpanBatch:
    trace_id = derive_trace_id(t.trace_id)
    span_ids = [derive_span_id(t.trace_id, e.eoi) for e in t.executions]
    parents = t.parents or parent_indices(t.executions)
    spans = []
    for e, span_id, parent in zip(t.executions, span_ids, parents):
        sig = e.signature
        attributes = {
            "code.namespace": sig.fq_class_name,
            "code.function": sig.method_name,
        }
        if e.session_id != NO_SESSION:
            attributes["session.id"] = e.session_id
        attributes["kieker.eoi"] = str(e.eoi)
        attributes["kieker.ess"] = str(e.ess)
        spans.append(
            Span(
                trace_id,
                span_id,
                span_ids[parent] if parent is not None else None,
                f"{sig.class_name}.{sig.method_name}",
                e.tin,
                e.tout,
                attributes,
                e.hostname or UNKNOWN_SERVICE,
            )
        )
    return SpanBatch(spans)
