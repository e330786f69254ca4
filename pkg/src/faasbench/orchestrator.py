"""Campaign lifecycle: deploy, run, clean up.

A campaign is a matrix of providers x regions x runtimes x memory sizes for
one workload, run in one mode (probe, stress or cold start). Adapters hide
how a provider is reached: :class:`SimAdapter` embeds the simulator,
:class:`GenericHttpAdapter` points at endpoints that already exist.

Deployment follows a fixed step sequence (create group, package, upload,
trigger, verify) so adapters for real clouds can slot in by implementing the
steps.
"""

from __future__ import annotations

import abc
import enum
import itertools
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from faasbench import analyzer
from faasbench.injector import (
    DEFAULT_RATES,
    ProbePlan,
    RateResult,
    SimTarget,
    StressPlan,
    is_virtual,
    run_chain,
    run_probe,
    run_stress,
)
from faasbench.model import (
    Deployment,
    DeploymentState,
    ProfileSet,
    ProviderProfile,
    Sample,
    check_runtime,
    validate_memory,
)
from faasbench.simfaas import ProviderSim, calibrated_profile
from faasbench.simfaas.http import deployment_url, serve_http
from faasbench.store import Point, Store, StoreError, sample_to_point
from faasbench.workloads import WorkloadError, WorkloadSpec

logger = logging.getLogger(__name__)

CLOCKS = ("virtual", "wall")


class CampaignError(ValueError):
    pass


class RemovalError(RuntimeError):
    pass


class Mode(str, enum.Enum):
    PROBE = "probe"
    STRESS = "stress"
    COLD_START = "coldstart"

    @classmethod
    def parse(cls, value) -> Mode:
        if isinstance(value, cls):
            return value
        return cls(str(value).lower().replace("_", "").replace("-", ""))


# -- adapters -----------------------------------------------------------------


class ProviderAdapter(abc.ABC):
    """Deploys functions on one provider and tells the injector where they are."""

    name: str

    def deploy(self, dep: Deployment) -> Deployment:
        """Run every deployment step; the deployment ends Ready or Failed."""
        try:
            for step in (self.create_group, self.package, self.upload, self.trigger, self.verify):
                step(dep)
        except Exception as exc:  # noqa: BLE001 - any step failure isolates to this cell
            dep.transition(DeploymentState.FAILED)
            dep.params = {**dep.params, "error": f"{type(exc).__name__}: {exc}"}
            logger.warning("deploy %s failed: %s", dep.id, exc)
            return dep
        if dep.state is DeploymentState.DEPLOYING:
            dep.transition(DeploymentState.READY)
        return dep

    def create_group(self, dep: Deployment) -> None:
        pass

    def package(self, dep: Deployment) -> None:
        WorkloadSpec.parse({"id": dep.workload, "params": dep.params})

    def upload(self, dep: Deployment) -> None:
        pass

    @abc.abstractmethod
    def trigger(self, dep: Deployment) -> None: ...

    def verify(self, dep: Deployment) -> None:
        pass

    @abc.abstractmethod
    def target(self, dep: Deployment):
        """URL string or virtual target for the injector."""

    def invoke_url(self, dep: Deployment) -> str:
        t = self.target(dep)
        return t if isinstance(t, str) else t.name

    @abc.abstractmethod
    def remove(self, deployment_id: str) -> None:
        """Remove a deployment; removing an unknown id is a no-op."""

    @abc.abstractmethod
    def list(self) -> list[Deployment]: ...

    def census(self) -> dict[str, int]:
        return {"deployments": len(self.list())}

    def force_recycle(self, dep: Deployment) -> int:
        raise analyzer.Unsupported(f"{self.name}: cannot force instances to recycle")

    def instance_trace(self, dep: Deployment) -> list[tuple[int, int]]:
        raise analyzer.Unsupported(f"{self.name}: no instance data")

    def close(self) -> None:
        pass


class SimAdapter(ProviderAdapter):
    """Adapter over an embedded :class:`ProviderSim`.

    In ``virtual`` clock mode targets are driven on the engine's clock. In
    ``wall`` mode the engine is served over local HTTP and every engine call
    is marshalled onto the server loop.
    """

    def __init__(self, profile: ProviderProfile, seed: int = 0, clock: str = "virtual",
                 stuck: Iterable[str] = ()):
        if clock not in CLOCKS:
            raise CampaignError(f"clock must be one of {CLOCKS}")
        self.profile = profile
        self.name = profile.name
        self.clock = clock
        self.sim = ProviderSim(profile, seed=seed)
        self.stuck = set(stuck)
        self._lock = threading.Lock()
        self._server = serve_http(self.sim) if clock == "wall" else None

    def _call(self, fn, *args):
        if self._server is not None:
            return self._server.call(fn, *args)
        with self._lock:
            return fn(*args)

    def create_group(self, dep: Deployment) -> None:
        if dep.region not in self.profile.regions:
            raise CampaignError(f"{self.name} has no region {dep.region!r}")

    def upload(self, dep: Deployment) -> None:
        if not validate_memory(self.profile, dep.memory_mb):
            raise CampaignError(f"{dep.memory_mb} MB is not deployable on {self.name}")
        check_runtime(self.profile, dep.runtime_label)

    def trigger(self, dep: Deployment) -> None:
        self._call(self.sim.deploy, dep)
        dep.endpoint = (deployment_url(self._server, dep.id) if self._server
                        else f"sim://{self.name}/{dep.id}")

    def verify(self, dep: Deployment) -> None:
        if not self._call(self.sim.has, dep.id):
            raise CampaignError(f"{dep.id} missing after deploy")

    def target(self, dep: Deployment):
        if self._server is not None:
            return deployment_url(self._server, dep.id)
        return SimTarget(self.sim, dep.id)

    def remove(self, deployment_id: str) -> None:
        if deployment_id in self.stuck:
            raise RemovalError(f"{deployment_id}: resource group still locked")
        self._call(self.sim.remove, deployment_id)

    def list(self) -> list[Deployment]:
        return self._call(self.sim.deployments)

    def census(self) -> dict[str, int]:
        return {"deployments": len(self.list()), "instances": self._call(self.sim.instance_count)}

    def force_recycle(self, dep: Deployment) -> int:
        return self._call(self.sim.force_recycle, dep.id)

    def instance_trace(self, dep: Deployment) -> list[tuple[int, int]]:
        return self._call(self.sim.instance_trace, dep.id)

    def close(self) -> None:
        if self._server is not None:
            self._server.stop()
            self._server = None


class GenericHttpAdapter(ProviderAdapter):
    """Pre-existing endpoints; deploy and remove only track bookkeeping."""

    def __init__(self, endpoints: Mapping[str, str], name: str = "http"):
        self.name = name
        self.endpoints = dict(endpoints)
        self._deployed: dict[str, Deployment] = {}

    def package(self, dep: Deployment) -> None:
        pass

    def trigger(self, dep: Deployment) -> None:
        url = dep.endpoint or self.endpoints.get(dep.id) or self.endpoints.get(dep.region)
        if not url:
            raise CampaignError(f"no endpoint configured for {dep.id}")
        dep.endpoint = url
        self._deployed[dep.id] = dep

    def target(self, dep: Deployment) -> str:
        return dep.endpoint

    def remove(self, deployment_id: str) -> None:
        self._deployed.pop(deployment_id, None)

    def list(self) -> list[Deployment]:
        return list(self._deployed.values())


# -- campaigns --------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    provider: str
    region: str
    runtime: str
    memory_mb: int

    @property
    def deployment_id(self) -> str:
        raw = f"{self.provider}-{self.region}-{self.runtime}-{self.memory_mb}"
        return re.sub(r"[^A-Za-z0-9_.-]", "_", raw)


@dataclass
class Campaign:
    run_id: str
    providers: Sequence[str]
    memories: Sequence[int]
    runtimes: Sequence[str] | Mapping[str, Sequence[str]] = ("nodejs12.x",)
    regions: Mapping[str, Sequence[str]] = field(default_factory=dict)
    workload: WorkloadSpec = field(default_factory=lambda: WorkloadSpec.parse("fact"))
    mode: Mode = Mode.PROBE
    seed: int = 0
    timeout_ms: int = 30_000
    variant: str | None = None
    probe: Mapping = field(default_factory=dict)
    stress: Mapping = field(default_factory=dict)
    coldstart: Mapping = field(default_factory=dict)
    endpoints: Mapping[str, str] = field(default_factory=dict)
    calibration: Mapping[str, str] = field(default_factory=dict)
    stuck: Sequence[str] = ()

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        self.workload = WorkloadSpec.parse(self.workload)
        if not self.run_id or not re.match(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$", self.run_id):
            raise CampaignError(f"invalid run id {self.run_id!r}")
        if not self.providers:
            raise CampaignError("a campaign needs at least one provider")
        if not self.memories:
            raise CampaignError("a campaign needs at least one memory size")

    def runtimes_for(self, provider: str) -> Sequence[str]:
        if isinstance(self.runtimes, Mapping):
            return self.runtimes.get(provider, ())
        return self.runtimes

    def cells(self, profiles: ProfileSet | None = None) -> list[Cell]:
        out = []
        for prov in self.providers:
            regions = self.regions.get(prov)
            if not regions:
                if profiles is not None and prov in profiles:
                    regions = profiles[prov].regions[:1]
                else:
                    regions = ("default",)
            for region, rt, mem in itertools.product(regions, self.runtimes_for(prov), self.memories):
                out.append(Cell(prov, region, rt, int(mem)))
        return out

    def invalid_cells(self, profiles: ProfileSet) -> list[Cell]:
        return [c for c in self.cells(profiles)
                if c.provider in profiles and not validate_memory(profiles[c.provider], c.memory_mb)]

    def deployment(self, cell: Cell) -> Deployment:
        params = dict(self.workload.params)
        workload = self.workload.label
        return Deployment(cell.deployment_id, cell.provider, cell.region, workload, cell.runtime,
                          cell.memory_mb, self.timeout_ms, variant=self.variant, params=params)

    @classmethod
    def from_config(cls, cfg: Mapping, overrides: Mapping | None = None) -> Campaign:
        """Build from the ``campaign:`` section of a config file."""
        c = dict(cfg.get("campaign") or {})
        c.update({k: v for k, v in (overrides or {}).items() if v is not None})
        if "run_id" not in c:
            raise CampaignError("campaign.run_id is required")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(c) - known
        if unknown:
            raise CampaignError(f"unknown campaign keys: {sorted(unknown)}")
        if isinstance(c.get("providers"), str):
            c["providers"] = [c["providers"]]
        try:
            return cls(**c)
        except (TypeError, ValueError, WorkloadError) as exc:
            raise CampaignError(str(exc)) from exc


@dataclass(frozen=True)
class ProgressEvent:
    cell: str
    state: str
    detail: str = ""


ProgressFn = Callable[[ProgressEvent], None]


def build_adapters(campaign: Campaign, profiles: ProfileSet, clock: str = "virtual") -> dict[str, ProviderAdapter]:
    """One adapter per provider. Unknown provider names map to generic HTTP
    endpoints when the campaign lists any, else raise."""
    adapters: dict[str, ProviderAdapter] = {}
    for prov in campaign.providers:
        if prov in campaign.calibration:
            profile = calibrated_profile(campaign.calibration[prov])
        elif prov in profiles:
            profile = profiles[prov]
        elif campaign.endpoints:
            adapters[prov] = GenericHttpAdapter(campaign.endpoints, prov)
            continue
        else:
            raise CampaignError(f"unknown provider {prov!r}; known: {', '.join(profiles.names())}")
        adapters[prov] = SimAdapter(profile, seed=campaign.seed, clock=clock, stuck=campaign.stuck)
    return adapters


def deploy_campaign(campaign: Campaign, adapters: Mapping[str, ProviderAdapter],
                    on_event: ProgressFn | None = None, workers: int = 4,
                    profiles: ProfileSet | None = None) -> list[Deployment]:
    """Deploy every matrix cell concurrently; failures stay in their cell."""
    emit = on_event or (lambda ev: None)
    cells = campaign.cells(profiles)

    def one(cell: Cell) -> Deployment:
        dep = campaign.deployment(cell)
        emit(ProgressEvent(dep.id, DeploymentState.DEPLOYING.value))
        dep = adapters[cell.provider].deploy(dep)
        emit(ProgressEvent(dep.id, dep.state.value, dep.params.get("error", "")))
        return dep

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        deps = list(pool.map(one, cells))
    ready = sum(d.state is DeploymentState.READY for d in deps)
    logger.info("campaign %s: %d/%d deployments ready", campaign.run_id, ready, len(deps))
    return deps


def cell_tags(campaign: Campaign, dep: Deployment) -> dict[str, str]:
    return {
        "provider": dep.provider, "region": dep.region, "runtime": dep.runtime_label,
        "memory_mb": str(dep.memory_mb), "test": campaign.workload.label,
        "run_id": campaign.run_id, "mode": campaign.mode.value,
    }


class Interrupted(Exception):
    pass


@dataclass
class RunOutcome:
    run_id: str
    status: str
    samples: int = 0
    failed_cells: list[str] = field(default_factory=list)


def _start_of(target) -> int:
    return getattr(target, "now", 0) if is_virtual(target) else 0


def _rate_points(tags: dict, res: RateResult) -> list[Point]:
    fields = {k: v for k, v in res.summary().items() if v is not None}
    fields["rate"] = float(fields["rate"])
    fields["achieved_rps"] = float(fields["achieved_rps"])
    return [Point("stress", {**tags, "rate": f"{res.rate:g}"}, fields, res.start_ns)]


def run_campaign(campaign: Campaign, adapters: Mapping[str, ProviderAdapter], store: Store,
                 deployments: Sequence[Deployment], on_event: ProgressFn | None = None,
                 stop: threading.Event | None = None) -> RunOutcome:
    """Execute the campaign's mode against its Ready deployments.

    Samples stream into ``store`` as each step completes. A step is the whole
    probe, one rate of a stress run, or one cold-start repetition; completed
    steps are recorded in the run metadata so a rerun with the same run id
    resumes after the last one. Setting ``stop`` (or Ctrl-C) ends the run after
    the current step and marks it partial.
    """
    emit = on_event or (lambda ev: None)
    meta = store.create_run(campaign.run_id, {"mode": campaign.mode.value}, exist_ok=True)
    if meta.status == "complete":
        raise StoreError(f"run {campaign.run_id!r} is already complete")
    done = set(meta.info.get("done_steps", []))
    store.update_meta(campaign.run_id, status="running",
                      deployments=[d.to_dict() for d in deployments])
    ready = sorted((d for d in deployments if d.state is DeploymentState.READY), key=lambda d: d.id)
    failed = sorted(d.id for d in deployments if d.state is DeploymentState.FAILED)
    written = 0

    def commit(step: str, points: list[Point]) -> None:
        nonlocal written
        written += store.append(campaign.run_id, points)
        done.add(step)
        store.update_meta(campaign.run_id, done_steps=sorted(done))
        if stop is not None and stop.is_set():
            raise Interrupted(step)

    def sample_points(dep: Deployment, samples: Iterable[Sample]) -> list[Point]:
        tags = cell_tags(campaign, dep)
        return [sample_to_point(replace(s, deployment_id=dep.id), tags) for s in samples]

    try:
        if campaign.mode is Mode.PROBE:
            _run_probe(campaign, adapters, ready, done, commit, sample_points, emit)
        elif campaign.mode is Mode.STRESS:
            _run_stress(campaign, adapters, ready, done, commit, sample_points, emit)
        else:
            _run_coldstart(campaign, adapters, ready, done, commit, sample_points, emit)
    except (Interrupted, KeyboardInterrupt):
        store.update_meta(campaign.run_id, status="partial")
        logger.warning("run %s interrupted; completed steps kept", campaign.run_id)
        return RunOutcome(campaign.run_id, "partial", written, failed)
    status = "complete" if not failed else "complete-with-failures"
    store.update_meta(campaign.run_id, status="complete", failed_cells=failed)
    return RunOutcome(campaign.run_id, status, written, failed)


def _run_probe(campaign, adapters, ready, done, commit, sample_points, emit):
    if "probe" in done or not ready:
        return
    cfg = campaign.probe
    by_target = {}
    groups: dict[bool, list] = {}
    for dep in ready:
        t = adapters[dep.provider].target(dep)
        by_target[t if isinstance(t, str) else t.name] = dep
        groups.setdefault(is_virtual(t), []).append(t)
        emit(ProgressEvent(dep.id, "Running", "probe"))
    points = []
    for targets in groups.values():
        plan = ProbePlan(targets, float(cfg.get("interval_s", 5.0)),
                         int(cfg.get("samples", 100)), float(cfg.get("timeout_s", 30.0)))
        start = max((_start_of(t) for t in targets), default=0)
        for name, res in run_probe(plan, start_ns=start).items():
            points += sample_points(by_target[name], res.samples)
    commit("probe", points)


def _run_stress(campaign, adapters, ready, done, commit, sample_points, emit):
    cfg = campaign.stress
    rates = [float(r) for r in cfg.get("rates", DEFAULT_RATES)]
    for dep in ready:
        todo = [r for r in rates if f"stress:{dep.id}:{r:g}" not in done]
        if not todo:
            continue
        emit(ProgressEvent(dep.id, "Running", "stress"))
        adapter = adapters[dep.provider]
        target = adapter.target(dep)
        tags = cell_tags(campaign, dep)
        plan = StressPlan(target, todo, float(cfg.get("duration_s", 60.0)), cfg.get("connections"),
                          float(cfg.get("drain_gap_s", 60.0)), float(cfg.get("timeout_s", 30.0)))

        def on_rate(res: RateResult, dep=dep, adapter=adapter, tags=tags):
            pts = sample_points(dep, res.samples) + _rate_points(tags, res)
            try:
                trace = adapter.instance_trace(dep)
            except analyzer.Unsupported:
                trace = []
            pts += [Point("instances", {**tags, "rate": f"{res.rate:g}"}, {"count": n}, t)
                    for t, n in trace if t >= res.start_ns]
            commit(f"stress:{dep.id}:{res.rate:g}", pts)

        run_stress(plan, on_rate, start_ns=_start_of(target))


def _run_coldstart(campaign, adapters, ready, done, commit, sample_points, emit):
    cfg = campaign.coldstart
    reps = int(cfg.get("repetitions", 10))
    per_rep = 1 + int(cfg.get("warm_per_rep", 9))
    gap = float(cfg.get("gap_s", 1.0))
    for dep in ready:
        adapter = adapters[dep.provider]
        target = adapter.target(dep)
        emit(ProgressEvent(dep.id, "Running", "coldstart"))
        for rep in range(reps):
            step = f"coldstart:{dep.id}:{rep}"
            if step in done:
                continue
            adapter.force_recycle(dep)
            samples = run_chain(target, per_rep, gap, timeout_s=dep.timeout_ms / 1000,
                                start_ns=_start_of(target), seq0=rep * per_rep)
            commit(step, sample_points(dep, samples))


# -- cleanup -------------------------------------------------------------------


@dataclass
class CleanupReport:
    removed: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed


def cleanup(deployments: Iterable[Deployment], adapters: Mapping[str, ProviderAdapter],
            on_event: ProgressFn | None = None) -> CleanupReport:
    """Remove every deployment; failures are reported, never swallowed."""
    emit = on_event or (lambda ev: None)
    report = CleanupReport()
    for dep in sorted(deployments, key=lambda d: d.id):
        adapter = adapters.get(dep.provider)
        if adapter is None:
            report.failed[dep.id] = f"no adapter for provider {dep.provider!r}"
            continue
        try:
            adapter.remove(dep.id)
        except Exception as exc:  # noqa: BLE001 - reported per resource
            report.failed[dep.id] = str(exc)
            emit(ProgressEvent(dep.id, "RemoveFailed", str(exc)))
            continue
        if dep.state is DeploymentState.READY:
            dep.transition(DeploymentState.REMOVED)
        report.removed.append(dep.id)
        emit(ProgressEvent(dep.id, DeploymentState.REMOVED.value))
    return report


def restore(deployments: Iterable[Mapping], adapters: Mapping[str, ProviderAdapter]) -> list[Deployment]:
    """Recreate recorded deployments in fresh adapters (the simulator keeps
    no state between processes)."""
    out = []
    for d in deployments:
        dep = Deployment.from_dict(d)
        if dep.state is DeploymentState.READY and dep.provider in adapters:
            fresh = adapters[dep.provider].deploy(replace(dep, state=DeploymentState.DEPLOYING))
            out.append(fresh)
        else:
            out.append(dep)
    return out
