"""Event scheduling on a virtual or wall clock.

The virtual clock is the default: events execute in timestamp order with a
sequence-number tie-break, so a seeded run is fully deterministic and takes no
real time. Wall-clock mode runs the same event queue against real time for
demonstration runs.
"""

from __future__ import annotations

import heapq
import time
from typing import Callable


class VirtualClock:
    """Clock that only moves when the scheduler advances it."""

    def __init__(self) -> None:
        self._now = 0.0

    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"clock cannot move backwards ({t} < {self._now})")
        self._now = t

    @property
    def is_virtual(self) -> bool:
        return True


class WallClock:
    """Monotonic wall clock; advancing to a future time sleeps."""

    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._origin

    def advance_to(self, t: float) -> None:
        delay = t - self.now()
        if delay > 0:
            time.sleep(delay)

    @property
    def is_virtual(self) -> bool:
        return False


Clock = VirtualClock | WallClock


class Scheduler:
    """Time-ordered event queue; ties resolve in scheduling order."""

    def __init__(self, clock: Clock):
        self.clock = clock
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0

    def call_at(self, t: float, fn: Callable[[], None]) -> None:
        if t < self.clock.now():
            t = self.clock.now()
        heapq.heappush(self._heap, (t, self._seq, fn))
        self._seq += 1

    def call_after(self, delay: float, fn: Callable[[], None]) -> None:
        self.call_at(self.clock.now() + delay, fn)

    def run(self) -> None:
        """Execute events until the queue drains."""
        while self._heap:
            t, _, fn = heapq.heappop(self._heap)
            self.clock.advance_to(t)
            fn()

    @property
    def pending(self) -> int:
        return len(self._heap)


class FifoServer:
    """Single-server FIFO processing stage with per-job service times.

    Jobs queue when they arrive faster than the server drains; completion
    callbacks fire at arrival-order completion times, which is what produces
    the latency knee once input rate exceeds 1 / service_time.
    """

    def __init__(self, scheduler: Scheduler):
        self._scheduler = scheduler
        self._busy_until = 0.0

    def submit(self, service_time: float, on_done: Callable[[], None]) -> float:
        start = max(self._scheduler.clock.now(), self._busy_until)
        done = start + service_time
        self._busy_until = done
        self._scheduler.call_at(done, on_done)
        return done
