"""Low-rate latency probing.

Every ``interval_s`` one request goes to each target. Probes are scheduled,
not chained: a slow reply does not delay the next probe.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from faasbench._httpio import split_url
from faasbench.injector.histogram import LatencyHistogram
from faasbench.injector.stress import SEC, PlanError, _Pool, _sample, http_call
from faasbench.injector.targets import Reply, is_virtual, target_name
from faasbench.model import Sample, Status

logger = logging.getLogger(__name__)


@dataclass
class ProbePlan:
    targets: Sequence[object]
    interval_s: float = 5.0
    samples_per_target: int = 100
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.interval_s <= 0 or self.samples_per_target < 1 or self.timeout_s <= 0:
            raise PlanError("interval and timeout must be > 0, samples >= 1")
        names = [target_name(t) for t in self.targets]
        if len(set(names)) != len(names):
            raise PlanError("duplicate probe targets")
        kinds = {is_virtual(t) for t in self.targets}
        if len(kinds) > 1:
            raise PlanError("cannot mix virtual and HTTP targets in one probe")

    @property
    def span_s(self) -> float:
        return self.samples_per_target * self.interval_s


@dataclass
class ProbeResult:
    target: str
    samples: list[Sample] = field(default_factory=list)
    histogram: LatencyHistogram = field(default_factory=LatencyHistogram)

    def add(self, s: Sample) -> None:
        self.samples.append(s)
        if s.status is Status.OK:
            self.histogram.record(s.latency_ns)


OnSample = Callable[[Sample], None]


def _due(start: int, i: int, interval_s: float) -> int:
    return start + round(i * interval_s * SEC)


def _run_virtual(plan: ProbePlan, on_sample: OnSample | None, start_ns: int) -> dict[str, ProbeResult]:
    timeout_ns = round(plan.timeout_s * SEC)
    results = {target_name(t): ProbeResult(target_name(t)) for t in plan.targets}

    def cb(target, seq, intended):
        def on_reply(reply: Reply):
            s = _sample(target.name, seq, intended, intended, reply, timeout_ns)
            results[target.name].add(s)
            if on_sample:
                on_sample(s)
        return on_reply

    for i in range(plan.samples_per_target):
        due = _due(start_ns, i, plan.interval_s)
        for t in plan.targets:
            t.advance(due)
            t.send(due, cb(t, i, due))
    for t in plan.targets:
        t.settle()
    for r in results.values():
        r.samples.sort(key=lambda s: s.seq)
    return results


async def _run_http(plan: ProbePlan, on_sample: OnSample | None) -> dict[str, ProbeResult]:
    timeout_ns = round(plan.timeout_s * SEC)
    results = {t: ProbeResult(t) for t in plan.targets}
    pools = {}
    for url in plan.targets:
        host, port, path = split_url(url)
        # enough connections that a probe never waits for a slow predecessor
        size = max(2, int(plan.timeout_s / plan.interval_s) + 2)
        pools[url] = (_Pool(host, port, size), path)
    epoch0, mono0 = time.time_ns(), time.monotonic_ns()
    shift = epoch0 - mono0

    async def one(url, seq, due):
        pool, path = pools[url]
        actual, reply = await http_call(pool, path, plan.timeout_s)
        reply = Reply(reply.done_ns + shift, reply.status, reply.http_code,
                      reply.instance_id, reply.cold, reply.response_bytes, reply.exec_ns)
        s = _sample(url, seq, due + shift, max(actual, due) + shift, reply, timeout_ns)
        results[url].add(s)
        if on_sample:
            on_sample(s)

    tasks = []
    for i in range(plan.samples_per_target):
        due = _due(mono0, i, plan.interval_s)
        delay = due - time.monotonic_ns()
        if delay > 0:
            await asyncio.sleep(delay / SEC)
        tasks.extend(asyncio.ensure_future(one(u, i, due)) for u in plan.targets)
    await asyncio.gather(*tasks)
    for pool, _ in pools.values():
        pool.close()
    for r in results.values():
        r.samples.sort(key=lambda s: s.seq)
    return results


def run_probe(plan: ProbePlan, on_sample: OnSample | None = None,
              start_ns: int = 0) -> dict[str, ProbeResult]:
    """Probe every target; returns results keyed by target name."""
    if not plan.targets:
        return {}
    if is_virtual(plan.targets[0]):
        out = _run_virtual(plan, on_sample, start_ns)
    else:
        out = asyncio.run(_run_http(plan, on_sample))
    for name, r in out.items():
        logger.info("probe %s: %d samples, %d ok", name, len(r.samples), r.histogram.total)
    return out


def run_chain(target, count: int, gap_s: float = 1.0, timeout_s: float = 30.0,
              start_ns: int = 0, seq0: int = 0) -> list[Sample]:
    """Send ``count`` requests back to back, each ``gap_s`` after the
    previous reply. Used for cold-start repetitions, where overlapping
    requests would spawn extra instances."""
    timeout_ns = round(timeout_s * SEC)
    gap_ns = round(gap_s * SEC)
    out: list[Sample] = []
    if is_virtual(target):
        t = start_ns
        for i in range(count):
            target.advance(t)
            got: list[Reply] = []
            target.send(t, got.append)
            target.settle()
            s = _sample(target.name, seq0 + i, t, t, got[0], timeout_ns)
            out.append(s)
            t = s.completed_at + gap_ns
        return out

    async def chain():
        host, port, path = split_url(target)
        pool = _Pool(host, port, 1)
        shift = time.time_ns() - time.monotonic_ns()
        for i in range(count):
            t = time.monotonic_ns()
            actual, reply = await http_call(pool, path, timeout_s)
            reply = Reply(reply.done_ns + shift, reply.status, reply.http_code,
                          reply.instance_id, reply.cold, reply.response_bytes, reply.exec_ns)
            out.append(_sample(target, seq0 + i, t + shift, actual + shift, reply, timeout_ns))
            await asyncio.sleep(gap_s)
        pool.close()

    asyncio.run(chain())
    return out
