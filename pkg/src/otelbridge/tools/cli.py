"""``otel-bridge serve|replay|emit``."""

from __future__ import annotations

import argparse
import logging
import math
import signal
import sys
import threading

from ..errors import BridgeError, ConfigError
from .config import EXPORTERS, BridgeConfig
from .emitter import ScenarioConfig, emit_synthetic, generate_records
from .replay import log_files, replay_log, write_log

log = logging.getLogger("otelbridge")


def _target(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host or "localhost", int(port)


def _speedup(text: str) -> float:
    value = math.inf if text.lower() in ("inf", "infinity", "max") else float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("speedup must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otel-bridge", description="Bridge monitoring records to OpenTelemetry.")
    parser.add_argument("--log-level", default=None, help="logging level (default INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the transformer daemon")
    serve.add_argument("--listen-host", default=None)
    serve.add_argument("--listen-port", type=int, default=None, help="TCP ingest port (default 9876)")
    serve.add_argument("--exporter", action="append", choices=EXPORTERS, help="otlp (default), zipkin or stdout")
    serve.add_argument("--otlp-endpoint", default=None)
    serve.add_argument("--zipkin-endpoint", default=None)
    serve.add_argument("--trace-timeout-ms", type=int, default=None, help="default 5000")
    serve.add_argument("--max-buffered-traces", type=int, default=None, help="default 10000")
    serve.add_argument("--max-trace-size", type=int, default=None, help="default 100000")
    serve.add_argument("--shards", dest="shard_count", type=int, default=None, help="default 4")
    serve.add_argument("--stats-port", type=int, default=None, help="default 8787")

    replay = sub.add_parser("replay", help="send a stored log to a transformer")
    replay.add_argument("map_file", nargs="?", help="map file (or use --log-dir)")
    replay.add_argument("dat_files", nargs="*")
    replay.add_argument("--log-dir", help="directory holding kieker.map and *.dat")
    replay.add_argument("--target", type=_target, default=("localhost", 9876))
    replay.add_argument("--speedup", type=_speedup, default=1.0, help="time compression; 'inf' for no pacing")

    emit = sub.add_parser("emit", help="emit synthetic traces")
    emit.add_argument("--target", type=_target, default=("localhost", 9876))
    emit.add_argument("--seed", type=int, default=0)
    emit.add_argument("--traces", type=int, default=10)
    emit.add_argument("--depth", type=int, default=3, help="maximum call depth")
    emit.add_argument("--fanout", type=int, default=3)
    emit.add_argument("--records", choices=("oer", "events"), default="oer")
    emit.add_argument("--write-log", metavar="DIR", help="also store the records as a replayable log")
    emit.add_argument("--no-send", action="store_true", help="only write the log")
    return parser


def _serve(args) -> int:
    exporters = args.exporter or []
    if len(exporters) > 1:
        raise ConfigError(f"exactly one exporter may be selected, got {', '.join(exporters)}")
    flags = {
        "listen_host": args.listen_host,
        "listen_port": args.listen_port,
        "exporter": exporters[0] if exporters else None,
        "otlp_endpoint": args.otlp_endpoint,
        "zipkin_endpoint": args.zipkin_endpoint,
        "trace_timeout_ms": args.trace_timeout_ms,
        "max_buffered_traces": args.max_buffered_traces,
        "max_trace_size": args.max_trace_size,
        "shard_count": args.shard_count,
        "stats_port": args.stats_port,
    }
    cfg = BridgeConfig.from_sources(flags)
    from .transformer import Transformer

    stop = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop.set())
    transformer = Transformer(cfg).start()
    host, port = transformer.address
    print(f"otel-bridge listening on {host}:{port}", file=sys.stderr, flush=True)
    if transformer.stats_address:
        print("stats on http://%s:%d/stats" % transformer.stats_address, file=sys.stderr, flush=True)
    while not stop.wait(0.5):
        pass
    report = transformer.shutdown()
    print(transformer.render_stats(), end="", file=sys.stderr, flush=True)
    return 0 if report is None or report.ok else 1


def _replay(args) -> int:
    if args.log_dir:
        map_file, dat_files = log_files(args.log_dir)
    else:
        if not args.map_file or not args.dat_files:
            raise ConfigError("replay needs a map file and at least one data file, or --log-dir")
        map_file, dat_files = args.map_file, args.dat_files
    report = replay_log(map_file, dat_files, args.target, args.speedup)
    print(f"sent={report.sent} lines={report.lines} bytes={report.bytes_sent} elapsed_s={report.elapsed_s:.3f}")
    return 0


def _emit(args) -> int:
    scenario = ScenarioConfig(
        traces=args.traces, max_depth=args.depth, max_fanout=args.fanout, seed=args.seed, record_kind=args.records
    )
    if args.write_log:
        files = write_log(generate_records(scenario), args.write_log)
        print(f"wrote {len(files)} data file(s) to {args.write_log}")
    if args.no_send:
        return 0
    report = emit_synthetic(scenario, args.target)
    print(
        f"traces={report.traces} records={report.records} executions={report.executions} bytes={report.bytes_sent}"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = {"serve": _serve, "replay": _replay, "emit": _emit}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        parser.exit(2, f"otel-bridge: error: {exc}\n")
    except (BridgeError, OSError) as exc:
        print(f"otel-bridge: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
