"""Discrete-event core: integer-microsecond clock, event queue, frame clock
and named random streams."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable

US_PER_S = 1_000_000
US_PER_MS = 1_000


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current simulation time."""


@dataclass(order=True)
class Event:
    fire_time: int
    sequence_number: int
    kind: str = field(compare=False)
    target: Any = field(compare=False, default=None)
    handler: Callable[..., None] | None = field(compare=False, default=None, repr=False)
    args: tuple = field(compare=False, default=(), repr=False)
    cancelled: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


class Simulator:
    """Single-threaded event loop.

    Events with equal ``fire_time`` run in insertion order. Time is an
    integer number of microseconds; there is no floating-point time anywhere.
    """

    def __init__(self, trace: bool = False):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.processed = 0
        self.trace: list[tuple[int, int, str, Any]] | None = [] if trace else None

    def schedule_event(self, time: int, kind: str, handler: Callable[..., None] | None = None,
                       *args, target: Any = None) -> Event:
        if not isinstance(time, int):
            raise SchedulingError(f"event time must be an integer number of us, got {time!r}")
        if time < self.now:
            raise SchedulingError(
                f"cannot schedule {kind!r} at t={time}us: current time is {self.now}us")
        ev = Event(time, self._seq, kind, target, handler, args)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_in(self, delay: int, kind: str, handler=None, *args, target=None) -> Event:
        return self.schedule_event(self.now + delay, kind, handler, *args, target=target)

    def pending(self) -> int:
        return sum(1 for ev in self._queue if not ev.cancelled)

    def peek_time(self) -> int | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].fire_time if self._queue else None

    def run_until(self, end: int) -> int:
        """Process every event with ``fire_time <= end``.

        Returns the time of the last processed event (0 if none ran).
        """
        last = 0 if self.processed == 0 else self.now
        queue = self._queue
        while queue and queue[0].fire_time <= end:
            ev = heapq.heappop(queue)
            if ev.cancelled:
                continue
            self.now = ev.fire_time
            last = ev.fire_time
            self.processed += 1
            if self.trace is not None:
                self.trace.append((ev.fire_time, ev.sequence_number, ev.kind, ev.target))
            if ev.handler is not None:
                ev.handler(*ev.args)
        return last


@dataclass
class FrameClock:
    frame_duration: int = 5_000
    current_frame_index: int = 0

    def __post_init__(self):
        if self.frame_duration <= 0:
            raise ValueError("frame_duration must be positive")

    def frame_start(self, k: int) -> int:
        return k * self.frame_duration

    def frame_of(self, t: int) -> int:
        return t // self.frame_duration

    def frames_in(self, duration: int) -> int:
        return duration // self.frame_duration


class UnknownStreamError(KeyError):
    pass


class RandomStreams:
    """Independently seeded random streams keyed by name.

    Each stream's seed depends only on the master seed and the stream's name,
    so registering a new consumer never shifts the draws of existing ones.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._ids: dict[str, int] = {}
        self._rngs: list[random.Random] = []

    def register(self, name: str) -> int:
        if name in self._ids:
            return self._ids[name]
        # str seeds are hashed with SHA-512, stable across processes
        self._rngs.append(random.Random(f"{self.seed}/{name}"))
        self._ids[name] = len(self._rngs) - 1
        return self._ids[name]

    def stream(self, stream_id: int) -> random.Random:
        if not 0 <= stream_id < len(self._rngs):
            raise UnknownStreamError(f"random stream {stream_id} was never registered")
        return self._rngs[stream_id]

    def next_random(self, stream_id: int) -> float:
        return self.stream(stream_id).random()

    def names(self) -> list[str]:
        return list(self._ids)
