from __future__ import annotations

import threading

BRIDGE_COUNTERS = (
    "records_in",
    "executions",
    "traces_complete",
    "traces_dropped",
    "spans_exported",
    "export_failures",
)


class Counters:
    """Thread-safe named counters rendered as ``key=value`` lines."""

    def __init__(self, names=BRIDGE_COUNTERS):
        self._lock = threading.Lock()
        self._values = dict.fromkeys(names, 0)

    def add(self, name: str, n: int = 1) -> None:
        with self._lock:
            self._values[name] = self._values.get(name, 0) + n

    def __getitem__(self, name: str) -> int:
        with self._lock:
            return self._values.get(name, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._values)

    def render(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.snapshot().items())


def parse_stats(text: str) -> dict[str, int]:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key.strip()] = int(value)
    return out
