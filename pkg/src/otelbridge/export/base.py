from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

from ..errors import TransportError
from .spans import SpanBatch

log = logging.getLogger(__name__)


@dataclass
class ExportResult:
    """Outcome of one export call, counted in spans."""

    accepted: int = 0
    rejected: int = 0
    retriable: int = 0
    attempts: int = 0
    delays: list[float] = field(default_factory=list)
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.rejected == 0 and self.retriable == 0


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff: wait ``base * factor**k`` before retry ``k``."""

    base: float = 1.0
    factor: float = 2.0
    max_attempts: int = 5

    def delays(self) -> list[float]:
        return [self.base * self.factor**k for k in range(self.max_attempts)]


NO_RETRY = RetryPolicy(max_attempts=0)


class Rejected(Exception):
    """The backend refused the payload; retrying would not help."""


class Exporter:
    """Base class: subclasses implement :meth:`_send` for a non-empty batch.

    ``_send`` returns the number of spans the backend rejected, raises
    :class:`TransportError` for transient failures and :class:`Rejected`
    for permanent ones.
    """

    def __init__(self, retry: RetryPolicy | None = None, sleep: Callable[[float], None] = time.sleep):
        self.retry = retry or RetryPolicy()
        self.sleep = sleep

    def _send(self, batch: SpanBatch) -> int:
        raise NotImplementedError

    def export(self, batch: SpanBatch) -> ExportResult:
        n = len(batch)
        result = ExportResult()
        if n == 0:
            return result
        delays = iter(self.retry.delays())
        while True:
            result.attempts += 1
            try:
                rejected = self._send(batch)
            except Rejected as exc:
                result.rejected = n
                result.error = exc
                return result
            except TransportError as exc:
                delay = next(delays, None)
                if delay is None:
                    log.warning("%s: giving up after %d attempts: %s", type(self).__name__, result.attempts, exc)
                    result.retriable = n
                    result.error = exc
                    return result
                log.info("%s: %s; retrying in %.1fs", type(self).__name__, exc, delay)
                result.delays.append(delay)
                self.sleep(delay)
                continue
            result.rejected = rejected
            result.accepted = n - rejected
            return result

    def shutdown(self) -> None:
        pass
