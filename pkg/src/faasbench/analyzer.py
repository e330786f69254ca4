"""Derived analyses over stored samples.

Cold-start extraction, memory scaling tables, saturation (shortfall) tables
and instance-count traces. Everything here is a pure function of its input;
reports convert to store points so history queries use one path.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from faasbench.injector.stress import LONG_TAIL_PERCENT, shortfall
from faasbench.model import Sample, Status
from faasbench.store import Point

DEFAULT_OUTLIER_K = 3.0


class AnalysisError(ValueError):
    pass


class MethodUnavailable(AnalysisError):
    """The requested detection method needs data these samples lack."""


class Unsupported(AnalysisError):
    pass


class DetectMethod(str, enum.Enum):
    INSTANCE_ID = "instance-id"
    COLD_FLAG = "cold-flag"
    LATENCY_OUTLIER = "latency-outlier"

    @classmethod
    def parse(cls, value: str | DetectMethod) -> DetectMethod:
        if isinstance(value, cls):
            return value
        key = value.lower().replace("_", "-")
        aliases = {"instanceid": "instance-id", "coldflag": "cold-flag",
                   "latencyoutlier": "latency-outlier"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class Labeled:
    sample: Sample
    cold: bool


def _ok_in_order(samples: Iterable[Sample]) -> list[Sample]:
    return sorted((s for s in samples if s.status is Status.OK),
                  key=lambda s: (s.intended_start, s.seq))


def detect_cold_starts(samples: Iterable[Sample], method: str | DetectMethod = DetectMethod.INSTANCE_ID,
                       k: float = DEFAULT_OUTLIER_K) -> list[Labeled]:
    """Label every OK sample as cold or warm.

    ``instance-id``: the first sample seen from each instance is cold.
    ``cold-flag``: trust the provider's cold header.
    ``latency-outlier``: cold when latency exceeds median + k * IQR.

    Raises:
        MethodUnavailable: when a sample lacks the data the method needs.
    """
    method = DetectMethod.parse(method)
    ok = _ok_in_order(samples)
    if method is DetectMethod.INSTANCE_ID:
        if any(s.instance_id is None for s in ok):
            raise MethodUnavailable("instance-id detection needs an instance id on every sample")
        seen: set[str] = set()
        out = []
        for s in ok:
            out.append(Labeled(s, s.instance_id not in seen))
            seen.add(s.instance_id)
        return out
    if method is DetectMethod.COLD_FLAG:
        if any(s.cold is None for s in ok):
            raise MethodUnavailable("cold-flag detection needs a provider cold flag on every sample")
        return [Labeled(s, bool(s.cold)) for s in ok]
    if not ok:
        return []
    lat = [s.latency_ns for s in ok]
    med = statistics.median(lat)
    if len(lat) >= 2:
        q1, _, q3 = statistics.quantiles(lat, n=4, method="inclusive")
    else:
        q1 = q3 = lat[0]
    threshold = med + k * (q3 - q1)
    return [Labeled(s, s.latency_ns > threshold) for s in ok]


@dataclass(frozen=True)
class BoxStats:
    count: int
    mean: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float

    @classmethod
    def of(cls, values: Sequence[float]) -> BoxStats:
        v = sorted(values)
        if len(v) >= 2:
            q1, med, q3 = statistics.quantiles(v, n=4, method="inclusive")
        else:
            q1 = med = q3 = v[0]
        return cls(len(v), math.fsum(v) / len(v), v[0], q1, med, q3, v[-1])


@dataclass(frozen=True)
class ColdStartReport:
    method: DetectMethod
    cold_count: int
    warm_count: int
    warm_mean_ms: float
    overhead_ms: BoxStats
    overheads_ms: tuple[float, ...] = field(repr=False, default=())
    group: Mapping[str, str] = field(default_factory=dict)

    def to_points(self, timestamp: int = 0) -> list[Point]:
        o = self.overhead_ms
        fields = {
            "cold_count": self.cold_count, "warm_count": self.warm_count,
            "warm_mean_ms": self.warm_mean_ms, "overhead_mean_ms": o.mean,
            "overhead_min_ms": o.minimum, "overhead_q1_ms": o.q1,
            "overhead_median_ms": o.median, "overhead_q3_ms": o.q3, "overhead_max_ms": o.maximum,
            "method": self.method.value,
        }
        return [Point("coldstart", dict(self.group), fields, timestamp)]


def cold_overhead(labeled: Sequence[Labeled], method: DetectMethod | str = DetectMethod.INSTANCE_ID,
                  group: Mapping[str, str] | None = None) -> ColdStartReport:
    """Overhead of each cold sample over the warm mean, clamped at zero."""
    cold = [x.sample.latency_ns for x in labeled if x.cold]
    warm = [x.sample.latency_ns for x in labeled if not x.cold]
    if not cold or not warm:
        raise AnalysisError(f"need at least one cold and one warm sample (got {len(cold)} cold, {len(warm)} warm)")
    warm_mean = math.fsum(warm) / len(warm)
    overheads = tuple(max(0.0, (c - warm_mean) / 1e6) for c in cold)
    return ColdStartReport(
        DetectMethod.parse(method), len(cold), len(warm), warm_mean / 1e6,
        BoxStats.of(overheads), overheads, dict(group or {}),
    )


@dataclass(frozen=True)
class ScalingRow:
    memory_mb: int
    count: int
    mean_ms: float
    stddev_ms: float
    doubling_ratio: float | None  # mean(m) / mean(2m), if 2m was measured


def scaling_table(by_memory: Mapping[int, Sequence[float]]) -> list[ScalingRow]:
    """Execution-time statistics per memory size, sorted by memory.

    ``by_memory`` maps memory (MB) to execution times in ms.
    """
    means = {m: math.fsum(v) / len(v) for m, v in by_memory.items() if v}
    rows = []
    for m in sorted(means):
        v = by_memory[m]
        sd = statistics.stdev(v) if len(v) > 1 else 0.0
        ratio = means[m] / means[2 * m] if 2 * m in means and means[2 * m] > 0 else None
        rows.append(ScalingRow(m, len(v), means[m], sd, ratio))
    return rows


def scaling_points(rows: Sequence[ScalingRow], group: Mapping[str, str], timestamp: int = 0) -> list[Point]:
    out = []
    for r in rows:
        fields = {"count": r.count, "mean_ms": r.mean_ms, "stddev_ms": r.stddev_ms}
        if r.doubling_ratio is not None:
            fields["doubling_ratio"] = r.doubling_ratio
        out.append(Point("scaling", {**group, "memory_mb": str(r.memory_mb)}, fields, timestamp))
    return out


@dataclass(frozen=True)
class SaturationRow:
    provider: str
    runtime: str
    goal_rps: float
    achieved_rps: float
    percent: float


def saturation_table(results: Iterable[Mapping], provider: str = "", runtime: str = "") -> list[SaturationRow]:
    """Rows for every rate step that fell below 90% of its goal.

    Each result maps ``rate`` and ``achieved_rps`` (and optionally
    ``provider``/``runtime``, which override the defaults).
    """
    rows = []
    for r in results:
        goal = r["rate"]
        if goal <= 0:
            raise AnalysisError("goal rates must be > 0")
        sf = shortfall(goal, r["achieved_rps"])
        if sf.percent < LONG_TAIL_PERCENT:
            rows.append(SaturationRow(r.get("provider", provider), r.get("runtime", runtime),
                                      goal, r["achieved_rps"], sf.percent))
    return sorted(rows, key=lambda x: (x.provider, x.runtime, x.goal_rps))


def saturation_points(rows: Sequence[SaturationRow], group: Mapping[str, str], timestamp: int = 0) -> list[Point]:
    return [
        Point("saturation", {**group, "goal_rps": f"{r.goal_rps:g}"},
              {"achieved_rps": float(r.achieved_rps), "percent": r.percent}, timestamp)
        for r in rows
    ]


def instance_trace(source) -> list[tuple[int, int]]:
    """(time_ns, active instances) series.

    ``source`` is a simulator engine with a deployment id (``(sim, dep_id)``),
    or a list of ``instances`` points from the store.

    Raises:
        Unsupported: for targets that expose no instance data (plain HTTP).
    """
    if isinstance(source, str):
        raise Unsupported("instance traces need simulator admin data; a generic HTTP target has none")
    if isinstance(source, tuple) and len(source) == 2 and hasattr(source[0], "instance_trace"):
        sim, dep_id = source
        return list(sim.instance_trace(dep_id))
    pts = [p for p in source if isinstance(p, Point) and p.measurement == "instances"]
    if not pts:
        raise Unsupported("no instance data recorded for this run")
    return [(p.timestamp, int(p.fields["count"])) for p in sorted(pts, key=lambda p: p.timestamp)]


def format_table(headers: Sequence[str], rows: Iterable[Sequence]) -> str:
    body = [[_fmt(c) for c in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in body]) for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)
