"""Encode a few monitoring records, look at the bytes, decode them again."""

from otelbridge.records import (
    AfterOperationEvent,
    BeforeOperationEvent,
    OperationExecutionRecord,
    StringRegistry,
    TraceMetadataRecord,
)
from otelbridge.wire import FrameDecoder, encode_frame

sig = "public java.util.List tools.descartes.teastore.persistence.rest.CategoryEndpoint.listAll()"
records = [
    TraceMetadataRecord(1_000, 42, 7, "session-0001", "persistence"),
    BeforeOperationEvent(1_100, 1_100, 42, 0, sig, "tools.descartes.teastore.persistence.rest.CategoryEndpoint"),
    AfterOperationEvent(1_900, 1_900, 42, 1, sig, "tools.descartes.teastore.persistence.rest.CategoryEndpoint"),
    OperationExecutionRecord(2_000, sig, "session-0001", 43, 1_200, 2_000, "persistence", 0, 0),
]

# strings travel once, as registry entries, the first time a record uses them
registry = StringRegistry()
frames = [encode_frame(r, registry) for r in records]
for r, frame in zip(records, frames):
    print(f"{type(r).__name__:26} {len(frame):4d} bytes  {frame[:24].hex()}...")
print("strings announced:", len(registry))

# the decoder accepts arbitrary chunking, here 5 bytes at a time
stream = b"".join(frames)
decoder = FrameDecoder()
decoded = []
for i in range(0, len(stream), 5):
    decoded += decoder.feed(stream[i : i + 5])
decoder.close()

assert decoded == records
print(f"decoded {len(decoded)} records from {decoder.bytes_consumed} bytes")
