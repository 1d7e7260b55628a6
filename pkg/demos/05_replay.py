"""Record a synthetic run to disk, then replay it at full speed."""

import io
import tempfile
from pathlib import Path

from otelbridge.tools import BridgeConfig, ScenarioConfig, Transformer, generate_records
from otelbridge.tools.replay import log_files, replay_log, write_log

scenario = ScenarioConfig(traces=50, record_kind="events", seed=8)

with tempfile.TemporaryDirectory() as tmp:
    files = write_log(generate_records(scenario), tmp, records_per_file=500)
    print("log files:", ", ".join(p.name for p in [Path(tmp) / "kieker.map", *files]))
    print((Path(tmp) / "kieker.map").read_text(), end="")
    print(files[0].read_text().splitlines()[1][:110], "...")

    cfg = BridgeConfig(listen_host="127.0.0.1", listen_port=0, exporter="stdout", stats_port=None, shard_count=1)
    out = io.StringIO()
    with Transformer(cfg, stream=out) as bridge:
        report = replay_log(*log_files(tmp), bridge.address, speedup=float("inf"))
        bridge.wait_until(lambda s: s["traces_complete"] == scenario.traces)
        stats = bridge.stats()

print(f"\nreplayed {report.sent} records from {report.files} files in {report.elapsed_s:.2f}s")
print(f"{stats['traces_complete']} traces, {stats['spans_exported']} spans exported")
