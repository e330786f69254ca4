"""Test doubles shared by several test modules."""

from __future__ import annotations

from faasbench.injector import Reply
from faasbench.model import Status

MS = 1_000_000
SEC = 1_000_000_000


class SerialStallTarget:
    """Virtual endpoint with one worker that serves requests FIFO.

    Each request takes ``service_ns``; the worker is frozen during
    ``[stall_at, stall_at + stall_ns)``, so a request that would start inside
    the stall waits until it ends.
    """

    name = "virtual://serial-stall"

    def __init__(self, service_ns: int = 8 * MS, stall_at: int | None = None, stall_ns: int = SEC):
        self.service_ns = service_ns
        self.stall_at = stall_at
        self.stall_ns = stall_ns
        self.free_at = 0
        self.pending: list[tuple[int, object]] = []
        self.now = 0

    def _start_time(self, t: int) -> int:
        start = max(t, self.free_at)
        if self.stall_at is not None and self.stall_at <= start < self.stall_at + self.stall_ns:
            start = self.stall_at + self.stall_ns
        return start

    def advance(self, t: int) -> None:
        self.now = max(self.now, t)
        due = [p for p in self.pending if p[0] <= t]
        self.pending = [p for p in self.pending if p[0] > t]
        for done, cb in sorted(due, key=lambda p: p[0]):
            cb(Reply(done, Status.OK, 200, "w1", False, 100))

    def send(self, t: int, on_reply) -> None:
        start = self._start_time(t)
        done = start + self.service_ns
        self.free_at = done
        self.pending.append((done, on_reply))

    def settle(self) -> int:
        last = max((d for d, _ in self.pending), default=self.now)
        self.advance(last)
        return self.now


def co_oracle(rate: float, duration_s: float, service_ns: int, stall_at: int, stall_ns: int) -> list[int]:
    """Latencies (from intended start) for a FIFO single server, worked out
    with the Lindley recurrence instead of the event-driven double."""
    n = round(rate * duration_s)
    gap = SEC / rate
    lat = []
    free = 0
    for i in range(n):
        arrive = round(i * gap)
        start = max(arrive, free)
        if stall_at <= start < stall_at + stall_ns:
            start = stall_at + stall_ns
        free = start + service_ns
        lat.append(free - arrive)
    return lat
