"""Billing-cost calculator.

All arithmetic is exact: rates are :class:`~decimal.Decimal` dollars and every
divisor in the cost formulas is a product of powers of two and five, so the
results are finite decimals. Rounding to cents happens only in
:meth:`CostBreakdown.rounded`.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Mapping

from faasbench.model import MemoryBilling, PricingRates, ProviderProfile, validate_memory

CENT = Decimal("0.01")
KIB = 1024
GIB = 2**30


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadPlan:
    invocations_per_month: int
    exec_time_ms: int
    memory_used_mb: int
    memory_allocated_mb: int
    payload_bytes_per_call: int

    def __post_init__(self):
        for name in ("invocations_per_month", "exec_time_ms", "memory_used_mb",
                     "memory_allocated_mb", "payload_bytes_per_call"):
            if getattr(self, name) < 0:
                raise PlanError(f"{name} must be >= 0")
        if self.memory_used_mb > self.memory_allocated_mb:
            raise PlanError("memory_used_mb exceeds memory_allocated_mb")

    @classmethod
    def from_dict(cls, d: Mapping) -> WorkloadPlan:
        payload = d.get("payload_bytes_per_call")
        if payload is None:
            payload = int(d.get("payload_kb_per_call", 0) * KIB)
        allocated = int(d.get("memory_allocated_mb", d.get("memory_mb", 0)))
        return cls(
            invocations_per_month=int(d["invocations_per_month"]),
            exec_time_ms=int(d["exec_time_ms"]),
            memory_used_mb=int(d.get("memory_used_mb", allocated)),
            memory_allocated_mb=allocated,
            payload_bytes_per_call=int(payload),
        )


@dataclass(frozen=True)
class CostBreakdown:
    invocation_cost: Decimal
    gb_second_cost: Decimal
    ghz_second_cost: Decimal
    bandwidth_cost: Decimal

    @property
    def total(self) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = 80
            return self.invocation_cost + self.gb_second_cost + self.ghz_second_cost + self.bandwidth_cost

    def components(self) -> dict[str, Decimal]:
        return {
            "invocation": self.invocation_cost,
            "gb_second": self.gb_second_cost,
            "ghz_second": self.ghz_second_cost,
            "bandwidth": self.bandwidth_cost,
            "total": self.total,
        }

    def rounded(self) -> dict[str, Decimal]:
        """Components and total rounded half-up to cents.

        The total is rounded from the exact sum, not summed from rounded parts.
        """
        return {k: v.quantize(CENT, rounding=ROUND_HALF_UP) for k, v in self.components().items()}

    def micros(self) -> dict[str, int]:
        return {k: int(v.scaleb(6).quantize(Decimal(1), rounding=ROUND_HALF_UP))
                for k, v in self.components().items()}


def billable_exec_ms(rates: PricingRates, exec_time_ms: int) -> int:
    if exec_time_ms < 0:
        raise PlanError("exec_time_ms must be >= 0")
    step = rates.exec_rounding_ms
    return -(-exec_time_ms // step) * step


def billable_memory_mb(rates: PricingRates, used_mb: int, allocated_mb: int) -> int:
    if used_mb > allocated_mb:
        raise PlanError("used memory exceeds allocation")
    if rates.memory_billing is MemoryBilling.ROUND_UP_128:
        return -(-used_mb // 128) * 128
    return allocated_mb


def compute_cost(profile: ProviderProfile, plan: WorkloadPlan) -> CostBreakdown:
    if not validate_memory(profile, plan.memory_allocated_mb):
        raise PlanError(f"{plan.memory_allocated_mb} MB is not a valid size on {profile.name}")
    rates = profile.pricing
    n = Decimal(plan.invocations_per_month)
    exec_ms = Decimal(billable_exec_ms(rates, plan.exec_time_ms))
    mem_mb = Decimal(billable_memory_mb(rates, plan.memory_used_mb, plan.memory_allocated_mb))
    with localcontext() as ctx:
        ctx.prec = 80
        invocation = n / Decimal(1_000_000) * rates.per_million_invocations
        seconds = exec_ms / Decimal(1000) * n
        gb_second = mem_mb / Decimal(1024) * seconds * rates.per_gb_second
        mhz = profile.tier_mhz(plan.memory_allocated_mb)
        if mhz is None or rates.per_ghz_second == 0:
            ghz_second = Decimal(0)
        else:
            ghz_second = Decimal(mhz) / Decimal(1000) * seconds * rates.per_ghz_second
        egress_gib = n * Decimal(plan.payload_bytes_per_call) / Decimal(GIB)
        bandwidth = egress_gib * rates.per_gb_egress
        return CostBreakdown(invocation, gb_second, ghz_second, bandwidth)


def cost_table(profiles: Mapping[str, ProviderProfile], rows) -> list[dict]:
    """Evaluate plan rows; each row is a mapping with ``provider`` plus plan keys."""
    out = []
    for row in rows:
        profile = profiles[row["provider"]]
        plan = WorkloadPlan.from_dict(row)
        cost = compute_cost(profile, plan)
        out.append({
            "provider": profile.name,
            "memory_mb": plan.memory_allocated_mb,
            "exec_time_ms": plan.exec_time_ms,
            **cost.rounded(),
        })
    return out
