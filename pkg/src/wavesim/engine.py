"""Deterministic discrete-event core: virtual clock, event queue, seeded RNG streams.

Time is integer microseconds throughout the simulator. Events with equal fire
times are delivered in scheduling order, so a (config, seed) pair reproduces
the exact same event trace on any platform.
"""

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

US_PER_SECOND = 1_000_000

_MASK64 = (1 << 64) - 1


class SimulationError(Exception):
    """Raised when a run cannot proceed (bad schedule, failing handler)."""


def seconds_to_us(seconds: float) -> int:
    return round(seconds * US_PER_SECOND)


def us_to_seconds(t_us: int) -> float:
    return t_us / US_PER_SECOND


class RngStream:
    """Named deterministic random stream (SplitMix64, explicit 64-bit state).

    Identical (seed, name, call sequence) gives identical outputs everywhere;
    each stream advances independently of all others.
    """

    def __init__(self, seed: int, name: str):
        self.name = name
        digest = hashlib.sha256(f"{seed & _MASK64}:{name}".encode()).digest()
        self._state = int.from_bytes(digest[:8], "big")

    def _next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform_int(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        if lo > hi:
            raise ValueError(f"uniform_int: lo={lo} > hi={hi}")
        span = hi - lo + 1
        # rejection sampling keeps the draw exactly uniform
        limit = (1 << 64) - ((1 << 64) % span)
        u = self._next_u64()
        while u >= limit:
            u = self._next_u64()
        return lo + (u % span)


class RngRegistry:
    """Hands out one independent stream per (purpose, node) name."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, RngStream] = {}

    def stream(self, name: str) -> RngStream:
        if name not in self._streams:
            self._streams[name] = RngStream(self.seed, name)
        return self._streams[name]


@dataclass
class Event:
    fire_at: int
    seq: int
    target: str
    kind: str
    fn: Callable[[], Any]
    cancelled: bool = field(default=False, compare=False)


class EventHandle:
    __slots__ = ("_event",)

    def __init__(self, event: Event):
        self._event = event

    def cancel(self) -> None:
        self._event.cancelled = True

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled


@dataclass
class RunSummary:
    events_processed: int
    clock_us: int


class Engine:
    """Single-threaded event loop over a (time, insertion order) priority queue."""

    def __init__(self, rng: RngRegistry | None = None):
        self.now: int = 0
        self.rng = rng if rng is not None else RngRegistry(0)
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._processed = 0

    def schedule(self, delay_us: int, fn: Callable[[], Any], target: str = "",
                 kind: str = "") -> EventHandle:
        return self.schedule_at(self.now + delay_us, fn, target, kind)

    def schedule_at(self, fire_at: int, fn: Callable[[], Any], target: str = "",
                    kind: str = "") -> EventHandle:
        if fire_at < self.now:
            raise SimulationError(
                f"cannot schedule event '{kind}' at t={fire_at} us: clock is {self.now} us")
        event = Event(fire_at, self._seq, target, kind, fn)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, event.seq, event))
        return EventHandle(event)

    def run_until(self, t_end_us: int) -> RunSummary:
        """Process every event with fire_at <= t_end_us in (time, seq) order."""
        processed_before = self._processed
        while self._heap and self._heap[0][0] <= t_end_us:
            fire_at, _, event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            self.now = fire_at
            try:
                event.fn()
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(
                    f"handler for event '{event.kind}' (target={event.target!r}, "
                    f"t={event.fire_at} us, seq={event.seq}) failed: {exc}") from exc
            self._processed += 1
        self.now = max(self.now, t_end_us)
        return RunSummary(self._processed - processed_before, self.now)
