"""Serve a :class:`ProviderSim` over local HTTP in wall-clock time.

Every deployment answers at ``/fn/<deployment_id>``. The engine runs on the
server's event loop only; a pump task advances it to the current monotonic
time whenever an event falls due, and each response is held back until its
simulated completion (plus the region's network latency) has passed.

Admin paths (JSON):

``/_admin/instances``  active instance count per deployment
``/_admin/trace?deployment=<id>``  (time_ms, count) instance trace
``/_admin/census``  engine counters
"""

from __future__ import annotations

import asyncio
import json
import logging
import time

from faasbench._httpio import HttpRequest, HttpResponse, ServerThread
from faasbench.model import Status
from faasbench.simfaas.engine import MS, SEC, NotDeployed, ProviderSim

logger = logging.getLogger(__name__)

FN_PREFIX = "/fn/"
_CODES = {Status.OK: 200, Status.REJECTED: 429, Status.TIMEOUT: 504}


class _Driver:
    """Maps monotonic wall time onto the engine's virtual clock."""

    def __init__(self, sim: ProviderSim, loop: asyncio.AbstractEventLoop):
        self.sim = sim
        self.loop = loop
        self.origin = time.monotonic_ns() - sim.now
        self._timer: asyncio.TimerHandle | None = None
        self._timer_at: int | None = None

    def now(self) -> int:
        return max(self.sim.now, time.monotonic_ns() - self.origin)

    def pump(self) -> None:
        self._timer = self._timer_at = None
        self.sim.run_until(self.now())
        self._arm()

    def _arm(self) -> None:
        nxt = self.sim.next_event_time()
        if nxt is None:
            return
        if self._timer is not None:
            if self._timer_at <= nxt:
                return
            self._timer.cancel()
        delay = max(0.0, (nxt - self.now()) / SEC)
        self._timer_at = nxt
        self._timer = self.loop.call_later(delay, self.pump)

    async def invoke(self, deployment_id: str):
        fut = self.loop.create_future()
        req = self.sim.submit(deployment_id, self.now(), fut.set_result)
        self._arm()
        await fut
        # the engine marks completion at service end; the client sees it later
        wait = req.client_done_ns - self.now()
        if wait > 0:
            await asyncio.sleep(wait / SEC)
        return req


def make_sim_handler(sim: ProviderSim):
    def factory(loop):
        driver = _Driver(sim, loop)

        async def handler(req: HttpRequest) -> HttpResponse:
            path = req.path.rstrip("/")
            if path.startswith(FN_PREFIX):
                if req.method not in ("GET", "POST"):
                    return HttpResponse(405, body=b"method not allowed")
                dep_id = path[len(FN_PREFIX):]
                if not sim.has(dep_id):
                    return _json(404, {"error": f"no deployment {dep_id!r}"})
                try:
                    r = await driver.invoke(dep_id)
                except NotDeployed:
                    return _json(404, {"error": f"no deployment {dep_id!r}"})
                dep = sim.deployment(dep_id) if sim.has(dep_id) else None
                headers = {"x-sim-region": dep.region if dep else ""}
                if r.instance_id is not None:
                    headers["x-sim-instance-id"] = r.instance_id
                if r.status is Status.OK:
                    headers["x-sim-cold"] = "1" if r.cold else "0"
                    headers["x-exec-ms"] = f"{r.exec_ns / MS:.6f}"
                body = {"status": r.status.value, "latency_ms": r.latency_ns / MS}
                return _json(_CODES[r.status], body, headers)
            if path == "/_admin/instances":
                driver.pump()
                return _json(200, {d.id: sim.instance_count(d.id) for d in sim.deployments()})
            if path == "/_admin/trace":
                dep_id = req.query.get("deployment", "")
                if not sim.has(dep_id):
                    return _json(404, {"error": f"no deployment {dep_id!r}"})
                driver.pump()
                trace = [[t / MS, n] for t, n in sim.instance_trace(dep_id)]
                return _json(200, {"deployment": dep_id, "trace": trace})
            if path == "/_admin/census":
                driver.pump()
                return _json(200, sim.census())
            return _json(404, {"error": f"nothing at {req.path}"})

        return handler

    return factory


def _json(status: int, payload, extra=None) -> HttpResponse:
    body = json.dumps(payload, separators=(",", ":")).encode()
    return HttpResponse(status, {"content-type": "application/json", **(extra or {})}, body)


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    return host or "127.0.0.1", int(port or 0)


def serve_http(sim: ProviderSim, bind: str = "127.0.0.1:0") -> ServerThread:
    """Start the frontend in a background thread.

    After this call the engine belongs to the server loop: use
    ``server.call(fn, ...)`` to deploy or inspect from other threads.
    """
    host, port = parse_bind(bind)
    server = ServerThread(make_sim_handler(sim), host, port).start()
    logger.info("simulated %s listening on %s", sim.profile.name, server.url)
    return server


def deployment_url(server: ServerThread, deployment_id: str) -> str:
    return f"{server.url}{FN_PREFIX}{deployment_id}"
