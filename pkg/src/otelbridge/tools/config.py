from __future__ import annotations

import os
from dataclasses import dataclass, fields

from ..errors import ConfigError
from ..export.otlp import DEFAULT_OTLP_ENDPOINT
from ..export.zipkin import DEFAULT_ZIPKIN_ENDPOINT
from ..wire import DEFAULT_BUFFER_SIZE, DEFAULT_PORT

EXPORTERS = ("otlp", "zipkin", "stdout")
ENV_PREFIX = "OTELBRIDGE_"
# environment names follow the CLI flag where the two differ
_ENV_NAMES = {"shard_count": "SHARDS"}


@dataclass
class BridgeConfig:
    listen_host: str = "0.0.0.0"
    listen_port: int = DEFAULT_PORT
    exporter: str = "otlp"
    otlp_endpoint: str = DEFAULT_OTLP_ENDPOINT
    zipkin_endpoint: str = DEFAULT_ZIPKIN_ENDPOINT
    trace_timeout_ms: int = 5000
    max_buffered_traces: int = 10_000
    max_trace_size: int = 100_000
    shard_count: int = 4
    stats_port: int | None = 8787  # None disables the stats endpoint
    stats_host: str = "127.0.0.1"
    buffer_size: int = DEFAULT_BUFFER_SIZE
    queue_capacity: int = 1024
    log_level: str = "INFO"

    def validate(self) -> BridgeConfig:
        if self.exporter not in EXPORTERS:
            raise ConfigError(f"exporter must be one of {', '.join(EXPORTERS)}, got {self.exporter!r}")
        for name in ("trace_timeout_ms", "max_buffered_traces", "max_trace_size", "shard_count",
                     "buffer_size", "queue_capacity"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("listen_port", "stats_port"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 65535:
                raise ConfigError(f"{name} out of range: {getattr(self, name)}")
        return self

    @classmethod
    def from_sources(cls, flags: dict | None = None, environ=None) -> BridgeConfig:
        """Defaults, overridden by ``OTELBRIDGE_*`` variables, overridden by *flags*.

        *flags* maps field names to values; ``None`` values count as unset.
        """
        environ = os.environ if environ is None else environ
        values = {}
        for f in fields(cls):
            env_name = ENV_PREFIX + _ENV_NAMES.get(f.name, f.name.upper())
            raw = environ.get(env_name)
            if raw is None:
                continue
            if f.type in ("int", int, "int | None"):
                try:
                    values[f.name] = int(raw)
                except ValueError:
                    raise ConfigError(f"{env_name} must be an integer, got {raw!r}") from None
            else:
                values[f.name] = raw
        for key, value in (flags or {}).items():
            if value is not None:
                values[key] = value
        return cls(**values).validate()
