"""Bridge Kieker-style monitoring records to OpenTelemetry spans."""

__version__ = "0.1.0"

from .errors import BridgeError
from .records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    MonitoringRecord,
    OperationExecutionRecord,
    OperationSignature,
    StringRegistry,
    TraceMetadataRecord,
    parse_signature,
)
from .reconstruct import ExecutionTrace, ReconstructionBuffer, parent_index
from .transform import Execution, TraceAssemblyState, from_oer
from .wire import decode_frame, encode_frame

__all__ = [
    "AfterOperationEvent",
    "BeforeOperationEvent",
    "BridgeError",
    "Execution",
    "ExecutionTrace",
    "MonitoringRecord",
    "OperationExecutionRecord",
    "OperationSignature",
    "ReconstructionBuffer",
    "StringRegistry",
    "TraceAssemblyState",
    "TraceMetadataRecord",
    "decode_frame",
    "encode_frame",
    "from_oer",
    "parent_index",
    "parse_signature",
]
