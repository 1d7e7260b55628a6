"""Run the transformer daemon in-process and feed it from the synthetic emitter.

Equivalent to ``otel-bridge serve --exporter stdout`` in one shell and
``otel-bridge emit --traces 200`` in another.
"""

import io
import urllib.request

from otelbridge.stats import parse_stats
from otelbridge.tools import BridgeConfig, ScenarioConfig, Transformer, emit_synthetic

cfg = BridgeConfig(listen_host="127.0.0.1", listen_port=0, exporter="stdout", stats_port=0)
out = io.StringIO()

with Transformer(cfg, stream=out) as bridge:
    host, port = bridge.address
    print(f"transformer on {host}:{port}, {cfg.shard_count} shards")

    sent = emit_synthetic(ScenarioConfig(traces=200, max_depth=5, seed=1), bridge.address)
    print(f"emitted {sent.traces} traces, {sent.executions} executions, {sent.bytes_sent} bytes")

    bridge.wait_until(lambda s: s["spans_exported"] == sent.executions)
    with urllib.request.urlopen("http://%s:%d/stats" % bridge.stats_address) as r:
        stats = parse_stats(r.read().decode())

for key in ("records_in", "executions", "traces_complete", "traces_dropped", "spans_exported"):
    print(f"{key:16} {stats[key]}")
print("first span:", out.getvalue().splitlines()[0])
