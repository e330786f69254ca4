"""Injection targets.

A target is either an HTTP URL (driven in wall-clock time over sockets) or a
*virtual* target driven on a simulated clock. Virtual targets implement:

``advance(t_ns)``
    process everything due up to ``t_ns``;
``send(t_ns, on_reply)``
    issue one request at ``t_ns``; ``on_reply(Reply)`` fires on completion;
``settle()``
    run until no request is outstanding, return the final time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, runtime_checkable

from faasbench.model import Status


@dataclass(frozen=True)
class Reply:
    done_ns: int
    status: Status
    http_code: int | None = 200
    instance_id: str | None = None
    cold: bool | None = None
    response_bytes: int = 0
    exec_ns: int | None = None


@runtime_checkable
class VirtualTarget(Protocol):
    name: str

    def advance(self, t_ns: int) -> None: ...

    def send(self, t_ns: int, on_reply: Callable[[Reply], None]) -> None: ...

    def settle(self) -> int: ...


_STATUS_CODES = {Status.OK: 200, Status.REJECTED: 429, Status.TIMEOUT: 504}


class SimTarget:
    """Adapter from a :class:`~faasbench.simfaas.ProviderSim` deployment."""

    def __init__(self, sim, deployment_id: str, response_bytes: int = 500):
        self.sim = sim
        self.deployment_id = deployment_id
        self.name = f"sim://{sim.profile.name}/{deployment_id}"
        self.response_bytes = response_bytes

    @property
    def now(self) -> int:
        return self.sim.now

    def advance(self, t_ns: int) -> None:
        if t_ns > self.sim.now:
            self.sim.run_until(t_ns)

    def send(self, t_ns: int, on_reply) -> None:
        def done(req):
            on_reply(Reply(
                done_ns=req.client_done_ns,
                status=req.status,
                http_code=_STATUS_CODES[req.status],
                instance_id=req.instance_id,
                cold=req.cold if req.status is Status.OK else None,
                response_bytes=self.response_bytes if req.status is Status.OK else 0,
                exec_ns=req.exec_ns if req.status is Status.OK else None,
            ))

        self.sim.submit(self.deployment_id, max(t_ns, self.sim.now), done)

    def settle(self) -> int:
        self.sim.drain()
        return self.sim.now


def target_name(target) -> str:
    return target if isinstance(target, str) else target.name


def is_virtual(target) -> bool:
    return not isinstance(target, str)
