from __future__ import annotations

import logging
import threading
import time
from collections.abc import Iterator
from contextlib import contextmanager


__all__ = ("StageTimer",)

_LOGGER = logging.getLogger("radt.harness.timing")


class StageTimer:
    """Accumulates wall-clock time per named stage."""

    def __init__(self) -> None:
        self._totals: dict[str, float] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"StageTimer({self.totals()!r})"

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self._totals[name] = self._totals.get(name, 0.0) + elapsed

    def totals(self) -> dict[str, float]:
        with self._lock:
            return dict(self._totals)

    def report(self) -> None:
        totals = self.totals()
        for name, seconds in totals.items():
            _LOGGER.info("%-12s %9.1f s", name, seconds)
        _LOGGER.info("%-12s %9.1f s", "total", sum(totals.values()))
