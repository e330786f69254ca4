"""Discrete-event model of a FaaS provider.

One :class:`ProviderSim` holds the instance pools of every deployment on a
provider. Time is integer nanoseconds supplied by the caller; the engine never
reads a clock, so the same request trace and seed always produce the same
events. The HTTP frontend (:mod:`faasbench.simfaas.http`) drives it from
wall-clock time instead.

Request lifecycle: an arriving request takes an idle warm instance if one
exists, otherwise spawns a new instance (paying spawn latency plus a
cold-start sample) when the cap and spawn rate allow, otherwise waits in a
FIFO queue. A full queue, or on providers that count queued requests against
the concurrency limit a full limit, rejects the request.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from faasbench.model import (
    Deployment,
    DeploymentState,
    ProviderProfile,
    ScalingLaw,
    ServiceTimeLaw,
    Status,
    runtime_family,
    validate_memory,
)
from faasbench.workloads import WorkloadSpec

MS = 1_000_000
SEC = 1_000_000_000
TIER_REFERENCE_MHZ = 2400
FIXED_BAND_MEMORY_MB = 1536  # midpoint of the 1024-2048 MB band


class SimError(RuntimeError):
    pass


class NotDeployed(SimError):
    pass


class InstanceStatus(str, enum.Enum):
    COLD_STARTING = "ColdStarting"
    WARM = "Warm"
    BUSY = "Busy"
    RECYCLED = "Recycled"


@dataclass
class InstanceState:
    instance_id: str
    deployment_id: str
    status: InstanceStatus
    last_used: int
    spawned_at: int
    idle_gen: int = 0
    serving: Request | None = None


@dataclass
class Request:
    rid: int
    deployment_id: str
    arrival_ns: int
    on_done: Callable[[Request], None] | None = None
    status: Status | None = None
    instance_id: str | None = None
    cold: bool = False
    start_ns: int | None = None
    done_ns: int | None = None
    network_ns: int = 0
    queued: bool = False
    overran: bool = False

    @property
    def finished(self) -> bool:
        return self.status is not None

    @property
    def client_done_ns(self) -> int:
        return self.done_ns + self.network_ns

    @property
    def latency_ns(self) -> int:
        return self.client_done_ns - self.arrival_ns

    @property
    def exec_ns(self) -> int | None:
        if self.start_ns is None or self.done_ns is None:
            return None
        return self.done_ns - self.start_ns


class SimEvent(NamedTuple):
    time_ns: int
    kind: str
    deployment_id: str
    instance_id: str | None = None
    request_id: int | None = None


def service_time(law: ServiceTimeLaw, tiers, memory_mb: int, work_ms: float) -> float:
    """Execution time in ms of ``work_ms`` (work measured at 1 vCPU / reference CPU)."""
    if law.law is ScalingLaw.LINEAR_WITH_CAP:
        if memory_mb <= 0:
            raise ValueError("memory must be positive")
        cap = law.cap_memory_mb
        return work_ms / (min(memory_mb, cap) / cap)
    if law.law is ScalingLaw.TIER_TABLE:
        mhz = dict(tiers or ()).get(memory_mb)
        if mhz is None:
            raise ValueError(f"{memory_mb} MB is not a CPU tier")
        return work_ms * TIER_REFERENCE_MHZ / mhz
    if law.law is ScalingLaw.FIXED_BAND:
        return work_ms * law.cap_memory_mb / FIXED_BAND_MEMORY_MB
    return work_ms


@dataclass
class _Pool:
    deployment: Deployment
    rng: random.Random
    service_ns: int
    network_ns: int
    timeout_ns: int
    cold_dist: object
    instances: dict[str, InstanceState] = field(default_factory=dict)
    idle: list[InstanceState] = field(default_factory=list)
    queue: deque = field(default_factory=deque)
    queued: int = 0
    starting: int = 0
    next_spawn_ns: int = 0
    slot_pending: bool = False
    trace: list[tuple[int, int]] = field(default_factory=list)

    @property
    def active(self) -> int:
        return len(self.instances)


class ProviderSim:
    """Simulated provider; see the module docstring for the request model."""

    def __init__(self, profile: ProviderProfile, seed: int = 0, record_log: bool = False):
        profile.validate()
        self.profile = profile
        self.seed = seed
        self.now = 0
        self._heap: list = []
        self._seq = itertools.count()
        self._rid = itertools.count()
        self._iid = itertools.count(1)
        self._pools: dict[str, _Pool] = {}
        self._removed: set[str] = set()
        self.log: list[SimEvent] | None = [] if record_log else None
        self.counters = {"admitted": 0, "completed": 0, "rejected": 0, "timed_out": 0}
        self.recycle_times: list[int] = []

    # -- deployments -------------------------------------------------------

    def deploy(self, deployment: Deployment) -> Deployment:
        p = self.profile
        if not validate_memory(p, deployment.memory_mb):
            raise SimError(f"{deployment.memory_mb} MB is not deployable on {p.name}")
        spec = WorkloadSpec.parse({"id": deployment.workload, "params": deployment.params})
        factor = p.runtime_work_factor.get(runtime_family(deployment.runtime_label), 1.0)
        work = p.service.base_work_ms_at_1vcpu * spec.work_units() * factor
        svc_ms = service_time(p.service, p.memory_tiers, deployment.memory_mb, work)
        self._pools[deployment.id] = _Pool(
            deployment=deployment,
            rng=random.Random(f"{self.seed}:{deployment.id}"),
            service_ns=max(1, round(svc_ms * MS)),
            network_ns=round(p.network_for(deployment.region) * MS),
            timeout_ns=deployment.timeout_ms * MS,
            cold_dist=p.cold_start_for(deployment.runtime_label, deployment.variant),
            trace=[(self.now, 0)],
        )
        self._removed.discard(deployment.id)
        if deployment.state is DeploymentState.DEPLOYING:
            deployment.transition(DeploymentState.READY)
        return deployment

    def remove(self, deployment_id: str) -> None:
        pool = self._pools.pop(deployment_id, None)
        if pool is None:
            return
        self._removed.add(deployment_id)
        if pool.deployment.state is DeploymentState.READY:
            pool.deployment.transition(DeploymentState.REMOVED)

    def deployments(self) -> list[Deployment]:
        return [p.deployment for p in self._pools.values()]

    def has(self, deployment_id: str) -> bool:
        return deployment_id in self._pools

    def deployment(self, deployment_id: str) -> Deployment:
        return self._pool(deployment_id).deployment

    def service_ms(self, deployment_id: str) -> float:
        return self._pool(deployment_id).service_ns / MS

    def _pool(self, deployment_id: str) -> _Pool:
        try:
            return self._pools[deployment_id]
        except KeyError:
            raise NotDeployed(deployment_id) from None

    # -- event plumbing ----------------------------------------------------

    def _push(self, t: int, kind: str, payload) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), kind, payload))

    def _emit(self, t, kind, dep_id, iid=None, rid=None, out=None) -> None:
        ev = SimEvent(t, kind, dep_id, iid, rid)
        if self.log is not None:
            self.log.append(ev)
        if out is not None:
            out.append(ev)

    def next_event_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def run_until(self, now: int) -> list[SimEvent]:
        """Process every event due at or before ``now``; return them."""
        if now < self.now:
            raise SimError(f"time went backwards: {now} < {self.now}")
        out: list[SimEvent] = []
        while self._heap and self._heap[0][0] <= now:
            t, _, kind, payload = heapq.heappop(self._heap)
            self.now = t
            getattr(self, f"_on_{kind}")(t, payload, out)
        self.now = now
        return out

    tick = run_until

    def drain(self) -> list[SimEvent]:
        """Run until no request is pending (recycle timers are left queued)."""
        out = []
        while self.in_flight():
            t = self.next_event_time()
            if t is None:
                break
            out.extend(self.run_until(t))
        return out

    # -- requests ----------------------------------------------------------

    def submit(self, deployment_id: str, now: int, on_done=None) -> Request:
        """Admit one request arriving at ``now``.

        ``on_done(request)`` fires once the request finishes (immediately for
        rejections). Raises :class:`NotDeployed` for unknown or removed ids.
        """
        self.run_until(now)
        pool = self._pool(deployment_id)
        req = Request(next(self._rid), deployment_id, now, on_done, network_ns=pool.network_ns)
        self.counters["admitted"] += 1
        self._emit(now, "arrive", deployment_id, rid=req.rid)
        p = self.profile
        if p.concurrency_counts_queued:
            busy = pool.active - len(pool.idle) + pool.queued
            if busy >= p.max_instances:
                self._reject(pool, req, now)
                return req
        if pool.idle:
            self._start(pool, pool.idle.pop(), req, now, cold=False)
        elif self._can_spawn_now(pool, now):
            self._spawn(pool, req, now)
        else:
            if not p.concurrency_counts_queued and pool.queued >= p.queue_capacity:
                self._reject(pool, req, now)
                return req
            req.queued = True
            pool.queue.append(req)
            pool.queued += 1
            self._push(now + pool.timeout_ns, "deadline", req)
            self._ensure_spawn_slot(pool, now)
        return req

    invoke = submit

    def _reject(self, pool: _Pool, req: Request, now: int) -> None:
        req.status = Status.REJECTED
        req.done_ns = now
        self.counters["rejected"] += 1
        self._emit(now, "reject", pool.deployment.id, rid=req.rid)
        if req.on_done:
            req.on_done(req)

    def _under_cap(self, pool: _Pool) -> bool:
        return pool.active < self.profile.instance_cap

    def _can_spawn_now(self, pool: _Pool, now: int) -> bool:
        return self._under_cap(pool) and now >= pool.next_spawn_ns

    def _ensure_spawn_slot(self, pool: _Pool, now: int) -> None:
        if pool.slot_pending or not pool.queued or not self._under_cap(pool):
            return
        pool.slot_pending = True
        self._push(max(now, pool.next_spawn_ns), "spawn_slot", pool.deployment.id)

    def _spawn(self, pool: _Pool, req: Request, now: int) -> None:
        scale = self.profile.scale_out
        pool.next_spawn_ns = max(now, pool.next_spawn_ns) + round(SEC / scale.max_spawn_rate)
        iid = f"{self.profile.name}-{next(self._iid):06d}"
        inst = InstanceState(iid, pool.deployment.id, InstanceStatus.COLD_STARTING, now, now)
        inst.serving = req
        req.instance_id = iid
        req.cold = True
        pool.instances[iid] = inst
        pool.starting += 1
        pool.trace.append((now, pool.active))
        cold_ms = pool.cold_dist.sample(pool.rng)
        ready = now + round((scale.spawn_latency_ms + cold_ms) * MS)
        self._emit(now, "spawn", pool.deployment.id, iid, req.rid)
        self._push(ready, "ready", inst)
        self._push(req.arrival_ns + pool.timeout_ns, "deadline", req)

    def _start(self, pool: _Pool, inst: InstanceState, req: Request, now: int, cold: bool) -> None:
        inst.status = InstanceStatus.BUSY
        inst.serving = req
        inst.idle_gen += 1
        req.instance_id = inst.instance_id
        req.cold = cold
        req.start_ns = now
        deadline = req.arrival_ns + pool.timeout_ns
        end = now + pool.service_ns
        if end > deadline:
            end = deadline
            req.overran = True
        self._push(end, "done", inst)

    def _on_ready(self, t: int, inst: InstanceState, out) -> None:
        pool = self._pools.get(inst.deployment_id)
        if pool is None:
            return
        pool.starting -= 1
        self._emit(t, "ready", inst.deployment_id, inst.instance_id, inst.serving.rid, out)
        req = inst.serving
        if req.status is not None:
            # bound request already timed out while the instance was starting
            inst.serving = None
            self._make_idle(pool, inst, t)
            return
        self._start(pool, inst, req, t, cold=True)

    def _on_done(self, t: int, inst: InstanceState, out) -> None:
        pool = self._pools.get(inst.deployment_id)
        req = inst.serving
        inst.serving = None
        if req.overran:
            req.status = Status.TIMEOUT
            self.counters["timed_out"] += 1
            kind = "timeout"
        else:
            req.status = Status.OK
            self.counters["completed"] += 1
            kind = "complete"
        req.done_ns = t
        self._emit(t, kind, inst.deployment_id, inst.instance_id, req.rid, out)
        if req.on_done:
            req.on_done(req)
        if pool is not None:
            self._make_idle(pool, inst, t)

    def _make_idle(self, pool: _Pool, inst: InstanceState, t: int) -> None:
        inst.last_used = t
        while pool.queue:
            nxt = pool.queue.popleft()
            if nxt.status is not None:
                continue
            pool.queued -= 1
            nxt.queued = False
            self._start(pool, inst, nxt, t, cold=False)
            return
        inst.status = InstanceStatus.WARM
        inst.idle_gen += 1
        pool.idle.append(inst)
        lo, hi = self.profile.idle_recycle_s
        idle_for = round(pool.rng.uniform(lo, hi) * SEC)
        self._push(t + idle_for, "recycle", (inst, inst.idle_gen))

    def _on_deadline(self, t: int, req: Request, out) -> None:
        # only requests that never started executing time out here
        if req.start_ns is not None or req.status is not None:
            return
        pool = self._pools.get(req.deployment_id)
        req.status = Status.TIMEOUT
        req.done_ns = t
        self.counters["timed_out"] += 1
        if req.queued:
            req.queued = False
            if pool is not None:
                pool.queued -= 1
        self._emit(t, "timeout", req.deployment_id, rid=req.rid, out=out)
        if req.on_done:
            req.on_done(req)

    def _on_spawn_slot(self, t: int, dep_id: str, out) -> None:
        pool = self._pools.get(dep_id)
        if pool is None:
            return
        pool.slot_pending = False
        if pool.idle or not self._under_cap(pool):
            return
        while pool.queue and pool.queue[0].status is not None:
            pool.queue.popleft()
        if not pool.queue:
            return
        if t < pool.next_spawn_ns:
            self._ensure_spawn_slot(pool, t)
            return
        req = pool.queue.popleft()
        pool.queued -= 1
        req.queued = False
        self._spawn(pool, req, t)
        self._ensure_spawn_slot(pool, t)

    def _on_recycle(self, t: int, payload, out) -> None:
        inst, gen = payload
        pool = self._pools.get(inst.deployment_id)
        if pool is None or inst.status is not InstanceStatus.WARM or inst.idle_gen != gen:
            return
        self._retire(pool, inst, t, out)

    def _retire(self, pool: _Pool, inst: InstanceState, t: int, out=None) -> None:
        inst.status = InstanceStatus.RECYCLED
        pool.idle.remove(inst)
        del pool.instances[inst.instance_id]
        pool.trace.append((t, pool.active))
        self.recycle_times.append(t - inst.last_used)
        self._emit(t, "recycle", inst.deployment_id, inst.instance_id, out=out)
        self._ensure_spawn_slot(pool, t)

    def force_recycle(self, deployment_id: str, now: int | None = None) -> int:
        """Recycle every idle instance of a deployment right away."""
        if now is not None:
            self.run_until(now)
        pool = self._pool(deployment_id)
        victims = list(pool.idle)
        for inst in victims:
            inst.idle_gen += 1
            self._retire(pool, inst, self.now)
        return len(victims)

    # -- introspection -----------------------------------------------------

    def instances(self, deployment_id: str) -> list[InstanceState]:
        return list(self._pool(deployment_id).instances.values())

    def instance_count(self, deployment_id: str | None = None) -> int:
        if deployment_id is not None:
            return self._pool(deployment_id).active
        return sum(p.active for p in self._pools.values())

    def instance_trace(self, deployment_id: str) -> list[tuple[int, int]]:
        return list(self._pool(deployment_id).trace)

    def queue_length(self, deployment_id: str) -> int:
        return self._pool(deployment_id).queued

    def in_flight(self) -> int:
        n = 0
        for pool in self._pools.values():
            n += pool.queued
            n += sum(1 for i in pool.instances.values()
                     if i.serving is not None and i.serving.status is None)
        return n

    def census(self) -> dict[str, int]:
        c = dict(self.counters)
        c["in_flight"] = self.in_flight()
        c["instances"] = self.instance_count()
        return c
