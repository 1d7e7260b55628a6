from __future__ import annotations


class BridgeError(Exception):
    """Base class for all errors raised by otelbridge."""


# -- records -----------------------------------------------------------------


class RegistryError(BridgeError):
    pass


class NegativeId(RegistryError, ValueError):
    def __init__(self, id_: int) -> None:
        super().__init__(f"registry id must be non-negative, got {id_}")
        self.id = id_


class RebindConflict(RegistryError):
    def __init__(self, id_: int, bound: str, attempted: str) -> None:
        super().__init__(f"registry id {id_} already bound to {bound!r}, refusing {attempted!r}")
        self.id = id_


class UnknownId(RegistryError, LookupError):
    def __init__(self, id_: int) -> None:
        super().__init__(f"registry id {id_} is not bound")
        self.id = id_


class MalformedSignature(BridgeError, ValueError):
    def __init__(self, text: str, reason: str) -> None:
        super().__init__(f"{reason}: {text!r}")
        self.text = text


# -- wire --------------------------------------------------------------------


class DecodeError(BridgeError):
    pass


class UnknownClassId(DecodeError):
    def __init__(self, class_id: int) -> None:
        super().__init__(f"unknown record class id {class_id}")
        self.class_id = class_id


class MalformedUtf8(DecodeError):
    pass


class FrameTooLarge(DecodeError):
    pass


class TruncatedStream(DecodeError):
    """The peer closed the connection in the middle of a frame."""


class BindError(BridgeError, OSError):
    pass


# -- pipeline ----------------------------------------------------------------


class PipelineError(BridgeError):
    pass


class TypeMismatch(PipelineError, TypeError):
    pass


class CycleError(PipelineError):
    pass


# -- transform / reconstruct -------------------------------------------------


class InvalidRecord(BridgeError, ValueError):
    pass


class UnbalancedEvent(BridgeError):
    def __init__(self, trace_id: int, reason: str) -> None:
        super().__init__(f"trace {trace_id}: {reason}")
        self.trace_id = trace_id


class DuplicateEoi(BridgeError):
    def __init__(self, trace_id: int, eoi: int) -> None:
        super().__init__(f"trace {trace_id}: eoi {eoi} received twice")
        self.trace_id = trace_id
        self.eoi = eoi


class NoParentFound(BridgeError):
    def __init__(self, index: int) -> None:
        super().__init__(f"execution at index {index} has no parent candidate")
        self.index = index


class InvalidTrace(BridgeError):
    pass


# -- export / tools ----------------------------------------------------------


class TransportError(BridgeError):
    pass


class EncodingError(BridgeError):
    pass


class ParseError(BridgeError, ValueError):
    def __init__(self, path, lineno: int, reason: str) -> None:
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno


class ConfigError(BridgeError, ValueError):
    pass
