"""Shared domain types and the built-in provider profiles.

A :class:`ProviderProfile` bundles everything the rest of the package needs
to know about one FaaS offering: instance limits, memory sizes, how CPU
scales with memory, cold-start and recycling behaviour, autoscaling policy
and billing rates. Profiles are plain frozen dataclasses and can be dumped to
and loaded from the YAML config format (see :func:`load_profiles`).
"""

from __future__ import annotations

import copy
import enum
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

logger = logging.getLogger(__name__)


class ProfileError(ValueError):
    """A provider profile or its config overrides are inconsistent."""


class ScalingLaw(str, enum.Enum):
    LINEAR_WITH_CAP = "LinearWithCap"
    TIER_TABLE = "TierTable"
    FLAT = "Flat"
    FIXED_BAND = "FixedBand"


class MemoryBilling(str, enum.Enum):
    AS_ALLOCATED = "AsAllocated"
    ROUND_UP_128 = "RoundUpTo128MB"


class DeploymentState(str, enum.Enum):
    DEPLOYING = "Deploying"
    READY = "Ready"
    FAILED = "Failed"
    REMOVED = "Removed"


class Status(str, enum.Enum):
    OK = "Ok"
    HTTP_ERROR = "HttpError"
    TIMEOUT = "Timeout"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class PricingRates:
    """Unit prices in dollars, kept as exact decimals."""

    per_million_invocations: Decimal
    per_gb_second: Decimal
    per_ghz_second: Decimal
    per_gb_egress: Decimal
    exec_rounding_ms: int
    memory_billing: MemoryBilling

    def __post_init__(self):
        for f in ("per_million_invocations", "per_gb_second", "per_ghz_second", "per_gb_egress"):
            value = getattr(self, f)
            if not isinstance(value, Decimal):
                object.__setattr__(self, f, Decimal(str(value)))
        object.__setattr__(self, "memory_billing", MemoryBilling(self.memory_billing))


@dataclass(frozen=True)
class ColdStartDist:
    """Cold-start delay distribution in milliseconds.

    ``kind="normal"``: truncated normal with standard deviation ``spread_ms``,
    clipped to ``mean +/- 3*spread`` and at zero.
    ``kind="uniform"``: uniform on ``[mean - spread, mean + spread]``.
    """

    mean_ms: float
    spread_ms: float
    kind: str = "normal"

    @property
    def bounds(self) -> tuple[float, float]:
        width = self.spread_ms if self.kind == "uniform" else 3 * self.spread_ms
        return max(0.0, self.mean_ms - width), self.mean_ms + width

    def sample(self, rng) -> float:
        lo, hi = self.bounds
        if self.kind == "uniform":
            return rng.uniform(lo, hi)
        if self.spread_ms == 0:
            return self.mean_ms
        while True:
            x = rng.gauss(self.mean_ms, self.spread_ms)
            if lo <= x <= hi:
                return x


@dataclass(frozen=True)
class AutoscalePolicy:
    spawn_latency_ms: float
    max_spawn_rate: float
    effective_instance_cap: int | None = None
    queue_capacity: int | None = None


@dataclass(frozen=True)
class ServiceTimeLaw:
    law: ScalingLaw
    base_work_ms_at_1vcpu: float
    cap_memory_mb: int = 1792

    def __post_init__(self):
        object.__setattr__(self, "law", ScalingLaw(self.law))


@dataclass(frozen=True)
class ProviderProfile:
    name: str
    regions: tuple[str, ...]
    max_instances: int
    concurrency_counts_queued: bool
    memory_min_mb: int
    memory_max_mb: int
    memory_step_mb: int
    memory_tiers: tuple[tuple[int, int], ...] | None
    scaling_law: ScalingLaw
    cold_start_ms: dict[str, ColdStartDist]
    idle_recycle_s: tuple[float, float]
    pricing: PricingRates
    scale_out: AutoscalePolicy
    service: ServiceTimeLaw
    network_ms: dict[str, float] = field(default_factory=dict)
    runtimes: tuple[str, ...] = ()
    runtime_work_factor: dict[str, float] = field(default_factory=dict)

    @property
    def instance_cap(self) -> int:
        cap = self.scale_out.effective_instance_cap
        return self.max_instances if cap is None else cap

    @property
    def queue_capacity(self) -> int:
        q = self.scale_out.queue_capacity
        return 10 * self.instance_cap if q is None else q

    def tier_mhz(self, memory_mb: int) -> int | None:
        for mem, mhz in self.memory_tiers or ():
            if mem == memory_mb:
                return mhz
        return None

    def cold_start_for(self, runtime_label: str, variant: str | None = None) -> ColdStartDist:
        family = runtime_family(runtime_label)
        for key in (f"{family}-{variant}" if variant else None, family, "default"):
            if key and key in self.cold_start_ms:
                return self.cold_start_ms[key]
        raise ProfileError(f"{self.name}: no cold-start distribution for {runtime_label!r}")

    def network_for(self, region: str) -> float:
        if region in self.network_ms:
            return self.network_ms[region]
        if self.network_ms:
            return sum(self.network_ms.values()) / len(self.network_ms)
        return 0.0

    def validate(self) -> None:
        """Raise :class:`ProfileError` if any invariant is violated."""
        problems = []
        if self.max_instances <= 0:
            problems.append("max_instances must be > 0")
        if self.memory_min_mb <= 0:
            problems.append("memory_min_mb must be > 0")
        if self.memory_min_mb > self.memory_max_mb:
            problems.append("memory_min_mb > memory_max_mb")
        if self.memory_step_mb <= 0:
            problems.append("memory_step_mb must be > 0")
        if self.scaling_law is ScalingLaw.TIER_TABLE and not self.memory_tiers:
            problems.append("TierTable scaling requires memory_tiers")
        if self.memory_tiers:
            mems = [m for m, _ in self.memory_tiers]
            if mems != sorted(mems):
                problems.append("memory_tiers must be sorted by memory")
            if any(not self.memory_min_mb <= m <= self.memory_max_mb for m in mems):
                problems.append("memory tier outside [memory_min_mb, memory_max_mb]")
        if self.service.law is not self.scaling_law:
            problems.append("service law does not match scaling_law")
        if self.service.base_work_ms_at_1vcpu <= 0:
            problems.append("base work must be > 0")
        cap = self.scale_out.effective_instance_cap
        if cap is not None and not 0 < cap <= self.max_instances:
            problems.append("effective_instance_cap must be in (0, max_instances]")
        if self.scale_out.max_spawn_rate <= 0:
            problems.append("max_spawn_rate must be > 0")
        lo, hi = self.idle_recycle_s
        if not 0 < lo <= hi:
            problems.append("idle_recycle_s must satisfy 0 < min <= max")
        p = self.pricing
        if min(p.per_million_invocations, p.per_gb_second, p.per_ghz_second, p.per_gb_egress) < 0:
            problems.append("pricing rates must be >= 0")
        if p.exec_rounding_ms not in (1, 100):
            problems.append("exec_rounding_ms must be 1 or 100")
        if "default" not in self.cold_start_ms:
            problems.append("cold_start_ms needs a 'default' entry")
        if problems:
            raise ProfileError(f"{self.name}: " + "; ".join(problems))


@dataclass
class Deployment:
    id: str
    provider: str
    region: str
    workload: str
    runtime_label: str
    memory_mb: int
    timeout_ms: int = 30_000
    endpoint: str = ""
    state: DeploymentState = DeploymentState.DEPLOYING
    variant: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    _TRANSITIONS = {
        DeploymentState.DEPLOYING: {DeploymentState.READY, DeploymentState.FAILED},
        DeploymentState.READY: {DeploymentState.REMOVED},
    }

    def transition(self, new_state: DeploymentState) -> None:
        new_state = DeploymentState(new_state)
        if new_state not in self._TRANSITIONS.get(self.state, ()):
            raise ValueError(f"illegal transition {self.state.value} -> {new_state.value}")
        self.state = new_state

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state"] = self.state.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> Deployment:
        d = dict(d)
        d["state"] = DeploymentState(d.get("state", "Deploying"))
        return cls(**d)


@dataclass(slots=True)
class Sample:
    """One invocation record. Times are integer nanoseconds."""

    deployment_id: str
    seq: int
    intended_start: int
    actual_start: int
    latency_ns: int
    service_latency_ns: int
    status: Status = Status.OK
    http_code: int | None = None
    instance_id: str | None = None
    cold: bool | None = None
    response_bytes: int = 0
    exec_ns: int | None = None  # function-reported execution time, if known

    def __post_init__(self):
        if self.actual_start < self.intended_start:
            raise ValueError("actual_start precedes intended_start")
        if not self.latency_ns >= self.service_latency_ns >= 0:
            raise ValueError("need latency_ns >= service_latency_ns >= 0")

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    @property
    def completed_at(self) -> int:
        return self.intended_start + self.latency_ns


def runtime_family(label: str) -> str:
    """Map a runtime label such as ``nodejs10.x`` to its family name."""
    s = label.lower()
    for prefix, family in (
        ("node", "nodejs"),
        ("python", "python"),
        ("go", "go"),
        ("dotnet", "dotnet"),
        (".net", "dotnet"),
        ("java", "java"),
        ("ruby", "ruby"),
        ("swift", "swift"),
        ("php", "php"),
        ("docker", "docker"),
    ):
        if s.startswith(prefix):
            return family
    return s


def check_runtime(profile: ProviderProfile, label: str) -> bool:
    """True if ``label`` is on the provider's allow-list; unknown labels only warn."""
    if label in profile.runtimes:
        return True
    logger.warning("%s: runtime %r is not in the known runtime list", profile.name, label)
    return False


def validate_memory(profile: ProviderProfile, memory_mb: int) -> bool:
    if profile.scaling_law is ScalingLaw.TIER_TABLE:
        return profile.tier_mhz(memory_mb) is not None
    if not profile.memory_min_mb <= memory_mb <= profile.memory_max_mb:
        return False
    return (memory_mb - profile.memory_min_mb) % profile.memory_step_mb == 0


def _normal(mean, frac=0.15):
    return ColdStartDist(mean, round(mean * frac, 6))


def _uniform(lo, hi):
    return ColdStartDist((lo + hi) / 2, (hi - lo) / 2, "uniform")


_AWS = ProviderProfile(
    name="aws",
    regions=("eu-central-1", "eu-west-1", "us-east-1", "us-west-2", "ap-southeast-1", "sa-east-1"),
    max_instances=3000,
    concurrency_counts_queued=False,
    memory_min_mb=128,
    memory_max_mb=3008,
    memory_step_mb=64,
    memory_tiers=None,
    scaling_law=ScalingLaw.LINEAR_WITH_CAP,
    cold_start_ms={"default": _normal(335), "dotnet": _normal(1739)},
    idle_recycle_s=(570.0, 630.0),
    pricing=PricingRates(
        Decimal("0.20"), Decimal("0.0000166667"), Decimal("0"), Decimal("0.09"), 100,
        MemoryBilling.AS_ALLOCATED,
    ),
    scale_out=AutoscalePolicy(spawn_latency_ms=0.0, max_spawn_rate=1000.0),
    service=ServiceTimeLaw(ScalingLaw.LINEAR_WITH_CAP, 8000 * 128 / 1792, 1792),
    network_ms={
        "eu-central-1": 80, "eu-west-1": 110, "us-east-1": 300,
        "us-west-2": 420, "ap-southeast-1": 900, "sa-east-1": 800,
    },
    runtimes=(
        "nodejs10.x", "nodejs12.x", "python2.7", "python3.6", "python3.7", "python3.8",
        "go1.11", "go1.13", "dotnet2.1", "java8", "java11", "ruby2.5", "ruby2.7",
    ),
)

_AZURE = ProviderProfile(
    name="azure",
    regions=("west-europe", "north-europe", "east-us", "west-us", "southeast-asia", "japan-east"),
    max_instances=200,
    concurrency_counts_queued=False,
    memory_min_mb=128,
    memory_max_mb=1536,
    memory_step_mb=128,
    memory_tiers=None,
    scaling_law=ScalingLaw.FIXED_BAND,
    cold_start_ms={"default": _uniform(2000, 5000), "dotnet-windows": _normal(1917)},
    idle_recycle_s=(900.0, 1200.0),
    pricing=PricingRates(
        Decimal("0.20"), Decimal("0.000016"), Decimal("0"), Decimal("0.087"), 1,
        MemoryBilling.ROUND_UP_128,
    ),
    # Linux consumption plan: a dozen instances at most, added slowly
    scale_out=AutoscalePolicy(spawn_latency_ms=0.0, max_spawn_rate=0.1, effective_instance_cap=12),
    service=ServiceTimeLaw(ScalingLaw.FIXED_BAND, 1267 * 1536 / 1792, 1792),
    network_ms={
        "west-europe": 120, "north-europe": 140, "east-us": 330,
        "west-us": 520, "southeast-asia": 1000, "japan-east": 1000,
    },
    runtimes=(
        "nodejs8.x", "nodejs10.x", "nodejs12.x", "python3.6", "python3.7", "python3.8",
        "dotnet2.2", "dotnet3.1", "java8",
    ),
)

_GOOGLE = ProviderProfile(
    name="google",
    regions=("europe-west1", "us-central1", "us-east1", "asia-east2", "asia-northeast1"),
    max_instances=1000,
    concurrency_counts_queued=False,
    memory_min_mb=128,
    memory_max_mb=2048,
    memory_step_mb=128,
    memory_tiers=((128, 200), (256, 400), (512, 800), (1024, 1400), (2048, 2400)),
    scaling_law=ScalingLaw.TIER_TABLE,
    cold_start_ms={"default": _uniform(2000, 3000)},
    idle_recycle_s=(600.0, 36000.0),
    pricing=PricingRates(
        Decimal("0.40"), Decimal("0.0000025"), Decimal("0.00001"), Decimal("0.12"), 100,
        MemoryBilling.AS_ALLOCATED,
    ),
    # reactive scale-out with provisioning lag
    scale_out=AutoscalePolicy(spawn_latency_ms=500.0, max_spawn_rate=2.0),
    service=ServiceTimeLaw(ScalingLaw.TIER_TABLE, 800.0, 1792),
    network_ms={
        "europe-west1": 130, "us-central1": 450, "us-east1": 330,
        "asia-east2": 1770, "asia-northeast1": 1100,
    },
    runtimes=("nodejs6", "nodejs8", "nodejs10", "python3.7", "go1.11", "go1.13"),
)

_IBM = ProviderProfile(
    name="ibm",
    regions=("eu-de", "eu-gb", "us-south", "us-east", "au-syd"),
    max_instances=1000,
    concurrency_counts_queued=True,
    memory_min_mb=128,
    memory_max_mb=2048,
    memory_step_mb=32,
    memory_tiers=None,
    scaling_law=ScalingLaw.FLAT,
    cold_start_ms={"default": _normal(335 + 600), "dotnet": _normal(1739)},
    idle_recycle_s=(570.0, 630.0),
    pricing=PricingRates(
        Decimal("0"), Decimal("0.000017"), Decimal("0"), Decimal("0"), 100,
        MemoryBilling.AS_ALLOCATED,
    ),
    scale_out=AutoscalePolicy(spawn_latency_ms=0.0, max_spawn_rate=50.0),
    service=ServiceTimeLaw(ScalingLaw.FLAT, 650.0, 1792),
    network_ms={"eu-de": 110, "eu-gb": 140, "us-south": 436, "us-east": 350, "au-syd": 1300},
    runtimes=(
        "nodejs8", "nodejs10", "python2.7", "python3.6", "python3.7", "go1.11",
        "dotnet2.2", "java8", "ruby2.5", "swift4.2", "php7.3", "docker",
    ),
    runtime_work_factor={"go": 4.0},
)

_BUILTIN = (_AWS, _AZURE, _GOOGLE, _IBM)


class ProfileSet(dict):
    """Profiles keyed by name, iterable in a stable order."""

    def __iter__(self):
        return iter(self.values())

    def names(self) -> list[str]:
        return list(self.keys())


def builtin_profiles() -> ProfileSet:
    return ProfileSet((p.name, p) for p in _BUILTIN)


# -- serialization ---------------------------------------------------------


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "__dataclass_fields__"):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    return value


def profile_to_dict(profile: ProviderProfile) -> dict:
    return _plain(profile)


def profile_from_dict(d: Mapping) -> ProviderProfile:
    d = dict(d)
    tiers = d.get("memory_tiers")
    return ProviderProfile(
        name=d["name"],
        regions=tuple(d["regions"]),
        max_instances=int(d["max_instances"]),
        concurrency_counts_queued=bool(d["concurrency_counts_queued"]),
        memory_min_mb=int(d["memory_min_mb"]),
        memory_max_mb=int(d["memory_max_mb"]),
        memory_step_mb=int(d["memory_step_mb"]),
        memory_tiers=tuple((int(m), int(c)) for m, c in tiers) if tiers else None,
        scaling_law=ScalingLaw(d["scaling_law"]),
        cold_start_ms={
            k: ColdStartDist(float(v["mean_ms"]), float(v["spread_ms"]), v.get("kind", "normal"))
            for k, v in d["cold_start_ms"].items()
        },
        idle_recycle_s=tuple(float(x) for x in d["idle_recycle_s"]),
        pricing=PricingRates(**{**d["pricing"], "exec_rounding_ms": int(d["pricing"]["exec_rounding_ms"])}),
        scale_out=AutoscalePolicy(**d["scale_out"]),
        service=ServiceTimeLaw(**d["service"]),
        network_ms={k: float(v) for k, v in d.get("network_ms", {}).items()},
        runtimes=tuple(d.get("runtimes", ())),
        runtime_work_factor={k: float(v) for k, v in d.get("runtime_work_factor", {}).items()},
    )


def dump_profiles(profiles: Iterable[ProviderProfile]) -> str:
    return yaml.safe_dump(
        {"profiles": {p.name: profile_to_dict(p) for p in profiles}}, sort_keys=False
    )


def _deep_merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict) and key not in (
            "cold_start_ms", "network_ms", "runtime_work_factor"
        ):
            out[key] = _deep_merge(out[key], value)
        elif isinstance(value, Mapping) and isinstance(out.get(key), dict):
            merged = dict(out[key])
            merged.update(copy.deepcopy(dict(value)))
            out[key] = merged
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_overrides(profile: ProviderProfile, overrides: Mapping) -> ProviderProfile:
    """Return ``profile`` with nested ``overrides`` merged in and re-validated."""
    if not overrides:
        return profile
    merged = _deep_merge(profile_to_dict(profile), overrides)
    merged.setdefault("name", profile.name)
    try:
        result = profile_from_dict(merged)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileError(f"{profile.name}: bad override: {exc}") from exc
    result.validate()
    return result


def profiles_from_config(config: Mapping | None) -> ProfileSet:
    """Built-in profiles with the ``profiles:`` section of a config applied.

    A profile name that is not built in must be given in full.
    """
    profiles = builtin_profiles()
    section = (config or {}).get("profiles") or {}
    for name, overrides in section.items():
        if name in profiles:
            profiles[name] = apply_overrides(profiles[name], overrides)
        else:
            try:
                p = profile_from_dict({"name": name, **overrides})
            except (KeyError, TypeError, ValueError) as exc:
                raise ProfileError(f"{name}: incomplete profile definition: {exc}") from exc
            p.validate()
            profiles[name] = p
    return profiles


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ProfileError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ProfileError(f"{path}: top level must be a mapping")
    return data


def load_profiles(path: str | Path | None = None) -> ProfileSet:
    return profiles_from_config(load_config(path))


def with_scale_out(profile: ProviderProfile, **changes) -> ProviderProfile:
    return replace(profile, scale_out=replace(profile.scale_out, **changes))
