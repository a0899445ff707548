"""
Timing decorator for FractalSym analysis entry points
"""

import functools
import logging
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger("fractalsym.timing")


@dataclass
class TimingRecord:
    """One timed call"""

    name: str
    duration_ms: float
    success: bool
    error: str | None = None


@dataclass
class Timings:
    """Registry of timed calls for the current run"""

    records: list[TimingRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, name: str, duration_ms: float, success: bool, error: str | None) -> None:
        with self._lock:
            self.records.append(TimingRecord(name, duration_ms, success, error))

    def total_ms(self, name: str | None = None) -> float:
        with self._lock:
            return sum(r.duration_ms for r in self.records if name is None or r.name == name)

    def summary(self) -> dict[str, float]:
        """Total milliseconds per entry point, keys sorted"""
        totals: dict[str, float] = {}
        with self._lock:
            for r in self.records:
                totals[r.name] = totals.get(r.name, 0.0) + r.duration_ms
        return {k: round(totals[k], 3) for k in sorted(totals)}

    def reset(self) -> None:
        with self._lock:
            self.records.clear()


# Global registry, reset by the CLI at the start of each command
timings = Timings()


def timed(name: str):
    """Decorator recording wall-clock duration of a call into the timing registry"""

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            start_time = time.perf_counter()
            success = False
            error = None

            try:
                result = func(*args, **kwargs)
                success = True
                return result
            except Exception as e:
                error = str(e)
                raise
            finally:
                duration_ms = (time.perf_counter() - start_time) * 1000
                timings.record(name, duration_ms, success, error)
                logger.debug(f"{name} took {duration_ms:.1f} ms (success={success})")

        return wrapper

    return decorator
