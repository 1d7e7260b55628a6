"""From before/after events to a sorted execution trace with parent links."""

from otelbridge.records import AfterOperationEvent, BeforeOperationEvent, TraceMetadataRecord
from otelbridge.reconstruct import ReconstructionBuffer
from otelbridge.transform import TraceAssemblyState

P = "tools.descartes.teastore.webui.servlet"
calls = [
    ("B", f"public void {P}.CategoryServlet.handle()"),
    ("B", f"public boolean {P}.LoginServlet.isLoggedIn()"),
    ("A", f"public boolean {P}.LoginServlet.isLoggedIn()"),
    ("B", f"public java.util.List {P}.CategoryServlet.loadProducts(long)"),
    ("B", f"public java.lang.String {P}.ImageHelper.preview(long)"),
    ("A", f"public java.lang.String {P}.ImageHelper.preview(long)"),
    ("A", f"public java.util.List {P}.CategoryServlet.loadProducts(long)"),
    ("A", f"public void {P}.CategoryServlet.handle()"),
]

events = [TraceMetadataRecord(0, 9, 1, "session-0007", "webui")]
for t, (kind, sig) in enumerate(calls, 1):
    cls = sig.split("(")[0].split()[-1].rpartition(".")[0]
    make = BeforeOperationEvent if kind == "B" else AfterOperationEvent
    events.append(make(t * 1000, t * 1000, 9, t - 1, sig, cls))

# executions leave the stack in completion order: children first
state = TraceAssemblyState()
executions = []
for e in events:
    executions += state.consume_event(e)
for x in executions:
    print(f"done: eoi={x.eoi} ess={x.ess} {x.signature.class_name}.{x.signature.method_name}")

# the buffer emits the trace once the root covers everything it has seen
buf = ReconstructionBuffer()
traces = []
for x in executions:
    traces += buf.add_execution(x, now=0)
(trace,) = traces

print()
for x, parent in zip(trace.executions, trace.parents):
    indent = "  " * x.ess
    print(f"{indent}{x.signature.class_name}.{x.signature.method_name}  "
          f"[{x.tin}..{x.tout}] parent={parent}")
