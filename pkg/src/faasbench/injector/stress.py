"""Constant-throughput (open-loop) stress injection.

Request ``i`` of a rate step is due at ``t0 + i/rate`` and is sent at that
moment whether or not earlier requests have returned. Latency is measured
from the due time, so a stalled server shows up as latency on every request
that was scheduled during the stall rather than as a gap in the record.
"""

from __future__ import annotations

import asyncio
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from faasbench._httpio import Connection, split_url
from faasbench.injector.histogram import LatencyHistogram
from faasbench.injector.targets import Reply, is_virtual, target_name
from faasbench.model import Sample, Status

logger = logging.getLogger(__name__)

SEC = 1_000_000_000
DEFAULT_RATES = (10, 25, 50, 100, 200, 400, 800, 1000)
LONG_TAIL_PERCENT = 90.0


class PlanError(ValueError):
    pass


@dataclass
class StressPlan:
    target: object
    rates: list[float] = field(default_factory=lambda: list(DEFAULT_RATES))
    duration_s: float = 60.0
    connections: int | None = None
    drain_gap_s: float = 60.0
    timeout_s: float = 30.0
    expected_latency_s: float = 1.0

    def __post_init__(self):
        if not self.rates:
            raise PlanError("at least one rate is required")
        if any(r <= 0 for r in self.rates):
            raise PlanError("rates must be > 0")
        if any(b <= a for a, b in zip(self.rates, self.rates[1:])):
            raise PlanError("rates must be strictly increasing")
        if self.duration_s <= 0:
            raise PlanError("duration must be > 0")
        if self.drain_gap_s < 0 or self.timeout_s <= 0:
            raise PlanError("drain gap must be >= 0 and timeout > 0")

    def pool_size(self, rate: float) -> int:
        if self.connections is not None:
            return self.connections
        return max(1, math.ceil(2 * rate * self.expected_latency_s))


@dataclass
class RateResult:
    rate: float
    duration_s: float
    start_ns: int
    histogram: LatencyHistogram
    samples: list[Sample]
    achieved_rps: float = 0.0
    errors: Counter = field(default_factory=Counter)

    @property
    def sent(self) -> int:
        return len(self.samples)

    @property
    def ok(self) -> int:
        return sum(1 for s in self.samples if s.status is Status.OK)

    def summary(self) -> dict:
        out = {
            "rate": self.rate,
            "achieved_rps": self.achieved_rps,
            "sent": self.sent,
            "ok": self.ok,
            **{f"err_{k}": v for k, v in sorted(self.errors.items())},
        }
        if self.histogram.total:
            out.update({k: v for k, v in self.histogram.summary().items() if k != "count"})
        return out


@dataclass(frozen=True)
class Shortfall:
    percent: float
    long_tail: bool


def shortfall(goal_rps: float, achieved_rps: float) -> Shortfall:
    if goal_rps <= 0:
        raise PlanError("goal must be > 0")
    pct = achieved_rps / goal_rps * 100
    return Shortfall(pct, pct < LONG_TAIL_PERCENT)


def _sample(dep_id: str, seq: int, intended: int, actual: int, reply: Reply, timeout_ns: int) -> Sample:
    latency = reply.done_ns - intended
    status, code = reply.status, reply.http_code
    if status is Status.OK and latency > timeout_ns:
        status, code, latency = Status.TIMEOUT, None, timeout_ns
    return Sample(
        deployment_id=dep_id, seq=seq, intended_start=intended, actual_start=actual,
        latency_ns=latency, service_latency_ns=max(0, min(latency, reply.done_ns - actual)),
        status=status, http_code=code, instance_id=reply.instance_id, cold=reply.cold,
        response_bytes=reply.response_bytes, exec_ns=reply.exec_ns,
    )


def _finish(result: RateResult, hists: list[LatencyHistogram]) -> RateResult:
    merged = LatencyHistogram()
    for h in hists:
        merged = merged.merge(h)
    result.histogram = merged
    window_end = result.start_ns + round(result.duration_s * SEC)
    good = sum(1 for s in result.samples
               if s.status is Status.OK and s.completed_at <= window_end)
    result.achieved_rps = good / result.duration_s
    result.errors = Counter(s.status.value for s in result.samples if s.status is not Status.OK)
    result.samples.sort(key=lambda s: s.seq)
    return result


def _offset(i: int, rate: float) -> int:
    """Nanoseconds from step start to the ``i``-th intended send."""
    return round(Fraction(i * SEC) / Fraction(rate))


# -- virtual clock ------------------------------------------------------------


def _virtual_rate(target, plan: StressPlan, rate: float, start: int, seq0: int) -> RateResult:
    n = round(rate * plan.duration_s)
    conns = plan.pool_size(rate)
    timeout_ns = round(plan.timeout_s * SEC)
    samples: list[Sample] = []
    # one private histogram per connection slot, merged when the step ends
    hists = [LatencyHistogram() for _ in range(min(conns, 64))]
    in_flight = 0

    def make_cb(seq, intended):
        def on_reply(reply: Reply):
            nonlocal in_flight
            in_flight -= 1
            s = _sample(target.name, seq, intended, intended, reply, timeout_ns)
            samples.append(s)
            if s.status is Status.OK:
                hists[seq % len(hists)].record(s.latency_ns)
        return on_reply

    for i in range(n):
        intended = start + _offset(i, rate)
        target.advance(intended)
        seq = seq0 + i
        if in_flight >= conns:
            samples.append(Sample(target.name, seq, intended, intended, 0, 0, Status.REJECTED))
            continue
        in_flight += 1
        target.send(intended, make_cb(seq, intended))
    target.settle()
    return _finish(RateResult(rate, plan.duration_s, start, LatencyHistogram(), samples), hists)


# -- wall clock -----------------------------------------------------------------


class _Pool:
    def __init__(self, host: str, port: int, size: int):
        self.host, self.port, self.size = host, port, size
        self.idle: list[Connection] = []
        self.opened = 0

    def acquire(self) -> Connection | None:
        if self.idle:
            return self.idle.pop()
        if self.opened < self.size:
            self.opened += 1
            return Connection(self.host, self.port)
        return None

    def release(self, conn: Connection, healthy: bool) -> None:
        if healthy:
            self.idle.append(conn)
        else:
            conn.close()
            self.opened -= 1

    def close(self):
        for c in self.idle:
            c.close()
        self.idle.clear()


async def http_call(pool: _Pool, target: str, timeout_s: float) -> tuple[int, Reply]:
    """Send one GET; returns (actual start ns, reply) using monotonic time."""
    conn = pool.acquire()
    actual = time.monotonic_ns()
    if conn is None:
        return actual, Reply(actual, Status.REJECTED, None)
    try:
        resp = await asyncio.wait_for(conn.request("GET", target), timeout_s)
    except asyncio.TimeoutError:
        pool.release(conn, False)
        return actual, Reply(time.monotonic_ns(), Status.TIMEOUT, None)
    except (OSError, ConnectionError, ValueError, asyncio.IncompleteReadError):
        pool.release(conn, False)
        return actual, Reply(time.monotonic_ns(), Status.HTTP_ERROR, None)
    done = time.monotonic_ns()
    pool.release(conn, True)
    cold = resp.headers.get("x-sim-cold")
    exec_ms = resp.headers.get("x-exec-ms")
    status = Status.OK if 200 <= resp.status < 300 else (
        Status.REJECTED if resp.status == 429 else Status.HTTP_ERROR)
    return actual, Reply(
        done, status, resp.status, resp.headers.get("x-sim-instance-id"),
        None if cold is None else cold == "1", resp.size,
        None if exec_ms is None else round(float(exec_ms) * 1e6),
    )


async def _http_rate(url: str, plan: StressPlan, rate: float, seq0: int) -> RateResult:
    host, port, path = split_url(url)
    pool = _Pool(host, port, plan.pool_size(rate))
    n = round(rate * plan.duration_s)
    timeout_ns = round(plan.timeout_s * SEC)
    epoch0 = time.time_ns()
    mono0 = time.monotonic_ns()
    samples: list[Sample] = []
    hists = [LatencyHistogram() for _ in range(min(pool.size, 64))]

    async def one(seq: int, due_mono: int):
        actual, reply = await http_call(pool, path, plan.timeout_s)
        shift = epoch0 - mono0
        reply = Reply(reply.done_ns + shift, reply.status, reply.http_code,
                      reply.instance_id, reply.cold, reply.response_bytes, reply.exec_ns)
        s = _sample(url, seq, due_mono + shift, max(actual, due_mono) + shift, reply, timeout_ns)
        samples.append(s)
        if s.status is Status.OK:
            hists[seq % len(hists)].record(s.latency_ns)

    tasks = []
    for i in range(n):
        due = mono0 + _offset(i, rate)
        delay = due - time.monotonic_ns()
        if delay > 0:
            await asyncio.sleep(delay / SEC)
        tasks.append(asyncio.ensure_future(one(seq0 + i, due)))
    await asyncio.gather(*tasks)
    pool.close()
    return _finish(RateResult(rate, plan.duration_s, epoch0, LatencyHistogram(), samples), hists)


# -- entry point ---------------------------------------------------------------


def run_stress(plan: StressPlan, on_rate: Callable[[RateResult], None] | None = None,
               start_ns: int = 0) -> list[RateResult]:
    """Run every rate step of ``plan`` in order.

    ``on_rate`` is called after each completed step (used to persist partial
    results). Virtual targets start at ``start_ns`` on their own clock.
    """
    results = []
    seq = 0
    if is_virtual(plan.target):
        t = start_ns
        for rate in plan.rates:
            res = _virtual_rate(plan.target, plan, rate, t, seq)
            seq += res.sent
            results.append(res)
            logger.info("%s rate %s: achieved %.2f rps", target_name(plan.target), rate, res.achieved_rps)
            if on_rate:
                on_rate(res)
            last_done = max((s.completed_at for s in res.samples), default=t)
            t = max(t + round(plan.duration_s * SEC) + round(plan.drain_gap_s * SEC), last_done)
        return results
    for k, rate in enumerate(plan.rates):
        if k:
            time.sleep(plan.drain_gap_s)
        res = asyncio.run(_http_rate(plan.target, plan, rate, seq))
        seq += res.sent
        results.append(res)
        logger.info("%s rate %s: achieved %.2f rps", plan.target, rate, res.achieved_rps)
        if on_rate:
            on_rate(res)
    return results
