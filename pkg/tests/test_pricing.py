"""Billing calculator: rounding rules, formulas and algebraic properties."""

from __future__ import annotations

from decimal import Decimal, localcontext

import pytest
from hypothesis import given
from hypothesis import strategies as st

from faasbench.model import builtin_profiles
from faasbench.pricing import (
    PlanError,
    WorkloadPlan,
    billable_exec_ms,
    billable_memory_mb,
    compute_cost,
    cost_table,
)

PROFILES = builtin_profiles()
AWS, AZURE, GOOGLE, IBM = (PROFILES[n] for n in ("aws", "azure", "google", "ibm"))
VALID_MEM = {"aws": [128, 256, 512, 1024, 2048, 3008], "azure": [128, 512, 1536],
             "google": [128, 256, 512, 1024, 2048], "ibm": [128, 256, 512, 1024, 2048]}


@pytest.mark.parametrize("profile, ms, billed", [
    (AWS, 601, 700), (AWS, 600, 600), (AWS, 0, 0), (AWS, 1, 100),
    (AZURE, 1267, 1267), (GOOGLE, 7700, 7700), (GOOGLE, 7701, 7800), (IBM, 650, 700),
])
def test_billable_exec_ms(profile, ms, billed):
    assert billable_exec_ms(profile.pricing, ms) == billed


@pytest.mark.parametrize("profile, used, alloc, billed", [
    (AZURE, 100, 1536, 128), (AZURE, 129, 1536, 256), (AZURE, 128, 1536, 128),
    (AZURE, 0, 1536, 0), (AWS, 100, 512, 512), (GOOGLE, 100, 2048, 2048),
])
def test_billable_memory_mb(profile, used, alloc, billed):
    assert billable_memory_mb(profile.pricing, used, alloc) == billed


def test_billable_memory_rejects_overuse():
    with pytest.raises(PlanError):
        billable_memory_mb(AWS.pricing, 600, 512)


def test_plan_validation():
    with pytest.raises(PlanError):
        WorkloadPlan(-1, 100, 100, 128, 0)
    with pytest.raises(PlanError):
        WorkloadPlan(1, 100, 200, 128, 0)


def test_invalid_memory_rejected():
    with pytest.raises(PlanError):
        compute_cost(GOOGLE, WorkloadPlan(10, 100, 100, 384, 0))


def test_hand_computed_rows():
    # 10M calls, 4 KiB payload: 10e6 * 4096 / 2**30 GiB of egress
    egress = Decimal(10_000_000 * 4096) / Decimal(2 ** 30)
    aws = compute_cost(AWS, WorkloadPlan(10_000_000, 8000, 100, 128, 4096))
    assert aws.bandwidth_cost == egress * Decimal("0.09")
    assert aws.gb_second_cost == Decimal(128) / 1024 * 8 * 10_000_000 * Decimal("0.0000166667")
    google = compute_cost(GOOGLE, WorkloadPlan(10_000_000, 7700, 100, 128, 4096))
    assert google.ghz_second_cost == Decimal("0.2") * Decimal("7.7") * 10_000_000 * Decimal("0.00001")
    assert google.rounded() == {"invocation": Decimal("4.00"), "gb_second": Decimal("24.06"),
                                "ghz_second": Decimal("154.00"), "bandwidth": Decimal("4.58"),
                                "total": Decimal("186.64")}


def test_zero_invocations_costs_nothing():
    for p in PROFILES:
        c = compute_cost(p, WorkloadPlan(0, 1000, 100, 128, 4096))
        assert c.total == 0


def test_total_rounds_exact_sum():
    c = compute_cost(AZURE, WorkloadPlan(10_000_000, 1267, 100, 1536, 4096))
    assert c.total == c.invocation_cost + c.gb_second_cost + c.ghz_second_cost + c.bandwidth_cost
    assert c.rounded()["total"] == Decimal("30.66")
    # 2.00 + 25.34 + 3.318786621... (egress 38.146972... GiB at 0.087)
    assert c.micros()["total"] == 30_658_787


def test_cost_table_accepts_kb_payload():
    rows = cost_table(PROFILES, [{"provider": "aws", "invocations_per_month": 10_000_000,
                                  "exec_time_ms": 1000, "memory_mb": 1024, "memory_used_mb": 100,
                                  "payload_kb_per_call": 4}])
    assert rows[0]["total"] == Decimal("172.10")


def _plans(provider):
    return st.builds(
        WorkloadPlan,
        st.integers(0, 10 ** 9), st.integers(0, 10 ** 6), st.just(0),
        st.sampled_from(VALID_MEM[provider]), st.integers(0, 10 ** 6),
    )


@pytest.mark.parametrize("provider", sorted(VALID_MEM))
@given(data=st.data())
def test_linear_in_invocations(provider, data):
    plan = data.draw(_plans(provider))
    one = compute_cost(PROFILES[provider], plan)
    two = compute_cost(PROFILES[provider], WorkloadPlan(2 * plan.invocations_per_month, plan.exec_time_ms,
                                                        plan.memory_used_mb, plan.memory_allocated_mb,
                                                        plan.payload_bytes_per_call))
    with localcontext() as ctx:
        ctx.prec = 80
        for key, value in one.components().items():
            assert two.components()[key] == 2 * value


@pytest.mark.parametrize("provider", sorted(VALID_MEM))
@given(data=st.data(), extra=st.integers(0, 10 ** 5))
def test_monotone_in_exec_time(provider, data, extra):
    plan = data.draw(_plans(provider))
    longer = WorkloadPlan(plan.invocations_per_month, plan.exec_time_ms + extra, plan.memory_used_mb,
                          plan.memory_allocated_mb, plan.payload_bytes_per_call)
    assert compute_cost(PROFILES[provider], longer).total >= compute_cost(PROFILES[provider], plan).total
