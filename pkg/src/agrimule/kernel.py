"""Deterministic discrete-event core: virtual clock, ordered queue, seeded RNG streams.

Everything else in the simulation schedules onto one :class:`Kernel`. Time is
integer milliseconds since scenario start. Two events due at the same
millisecond execute in insertion order, which together with labeled RNG
streams makes whole runs replayable bit for bit.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import PastEventError, SimError

SimTime = int  # milliseconds since scenario start


@dataclass(frozen=True)
class Event:
    """One scheduled occurrence: dispatched to `target`'s handler at `due`."""

    id: int
    due: SimTime
    target: str
    payload: Any = None


@dataclass
class RunReport:
    """What a single run_until call did."""

    executed: int
    clock: SimTime


class Kernel:
    """Single-threaded event loop with a virtual clock.

    External threads may only talk to the loop through :meth:`inject`; the
    queued callables are drained between events so they serialize with the
    simulation instead of racing it.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._now: SimTime = 0
        self._next_id = 0
        self._insert_seq = 0
        self._heap: list[tuple[SimTime, int, Event]] = []
        self._live: set[int] = set()
        self._handlers: dict[str, Callable[[Event], None]] = {}
        self._commands: deque[Callable[[], None]] = deque()
        self.trace: list[tuple[SimTime, str, int]] | None = None

    @property
    def now(self) -> SimTime:
        return self._now

    def register(self, target: str, handler: Callable[[Event], None]) -> None:
        self._handlers[target] = handler

    def schedule(self, due: SimTime, target: str, payload: Any = None) -> int:
        if due < self._now:
            raise PastEventError(f"due {due} is before now {self._now}")
        event = Event(self._next_id, due, target, payload)
        self._next_id += 1
        heapq.heappush(self._heap, (due, self._insert_seq, event))
        self._insert_seq += 1
        self._live.add(event.id)
        return event.id

    def schedule_in(self, delay: int, target: str, payload: Any = None) -> int:
        return self.schedule(self._now + delay, target, payload)

    def cancel(self, event_id: int) -> bool:
        if event_id in self._live:
            self._live.discard(event_id)
            return True
        return False

    def rng_stream(self, label: str) -> random.Random:
        """Fresh deterministic generator for (seed, label).

        Same pair always yields the identical draw sequence; callers that
        need a continuing stream must hold on to the returned object.
        """
        return random.Random(f"{self.seed}/{label}")

    def inject(self, command: Callable[[], None]) -> None:
        """Queue a callable from outside the loop; runs between events."""
        self._commands.append(command)

    def drain_commands(self) -> None:
        while self._commands:
            self._commands.popleft()()

    def run_until(self, t_end: SimTime) -> RunReport:
        """Execute every live event due at or before t_end, then park the clock there."""
        executed = 0
        self.drain_commands()
        while self._heap and self._heap[0][0] <= t_end:
            due, _, event = heapq.heappop(self._heap)
            if event.id not in self._live:
                continue
            self._live.discard(event.id)
            self._now = due
            if self.trace is not None:
                self.trace.append((due, event.target, event.id))
            handler = self._handlers.get(event.target)
            if handler is None:
                raise SimError(f"no handler registered for target {event.target!r}")
            handler(event)
            executed += 1
            self.drain_commands()
        if t_end > self._now:
            self._now = t_end
        return RunReport(executed=executed, clock=self._now)
