"""Load injection: open-loop stress, periodic probes, latency histograms."""

from faasbench.injector.histogram import EmptyHistogram, LatencyHistogram
from faasbench.injector.probe import ProbePlan, ProbeResult, run_chain, run_probe
from faasbench.injector.stress import (
    DEFAULT_RATES,
    LONG_TAIL_PERCENT,
    PlanError,
    RateResult,
    Shortfall,
    StressPlan,
    run_stress,
    shortfall,
)
from faasbench.injector.targets import Reply, SimTarget, VirtualTarget, is_virtual, target_name

__all__ = [
    "DEFAULT_RATES", "LONG_TAIL_PERCENT", "EmptyHistogram", "LatencyHistogram", "PlanError",
    "ProbePlan", "ProbeResult", "RateResult", "Reply", "Shortfall", "SimTarget", "StressPlan",
    "VirtualTarget", "is_virtual", "run_chain", "run_probe", "run_stress", "shortfall", "target_name",
]
