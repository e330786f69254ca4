"""Provider simulator: service-time laws, request lifecycle and HTTP frontend."""

from __future__ import annotations

import json
import statistics
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasbench.model import Deployment, DeploymentState, Status, builtin_profiles, with_scale_out
from faasbench.simfaas import (
    CALIBRATIONS,
    MS,
    SEC,
    NotDeployed,
    ProviderSim,
    SimError,
    calibrated_profile,
    service_time,
)
from faasbench.simfaas.http import deployment_url, serve_http

PROFILES = builtin_profiles()
MIN = 60 * SEC


def _dep(provider="aws", mem=512, runtime="nodejs12.x", workload="fact", dep_id=None, **kw):
    return Deployment(dep_id or f"{provider}-{mem}", provider, PROFILES[provider].regions[0], workload,
                      runtime, mem, **kw)


def _sim(provider="aws", seed=0, **kw):
    return ProviderSim(kw.pop("profile", PROFILES[provider]), seed=seed, **kw)


# -- service-time laws ------------------------------------------------------


def test_linear_law_doubles():
    law = PROFILES["aws"].service
    assert service_time(law, None, 256, 100) / service_time(law, None, 512, 100) == pytest.approx(2.0)
    assert service_time(law, None, 1792, 100) == service_time(law, None, 3008, 100) == 100


def test_flat_law():
    law = PROFILES["ibm"].service
    assert service_time(law, None, 128, 650) == service_time(law, None, 2048, 650) == 650


def test_tier_law_uses_mhz_ratio():
    g = PROFILES["google"]
    assert service_time(g.service, g.memory_tiers, 128, 10) / service_time(g.service, g.memory_tiers, 2048, 10) \
        == pytest.approx(2400 / 200)
    with pytest.raises(ValueError):
        service_time(g.service, g.memory_tiers, 384, 10)


def test_fixed_band_ignores_memory():
    a = PROFILES["azure"]
    assert service_time(a.service, None, 128, 100) == service_time(a.service, None, 1536, 100) \
        == pytest.approx(100 * 1792 / 1536)


def test_go_penalty_on_ibm():
    sim = _sim("ibm")
    sim.deploy(_dep("ibm", runtime="go1.11", dep_id="go"))
    sim.deploy(_dep("ibm", runtime="python3.7", dep_id="py"))
    assert sim.service_ms("go") == pytest.approx(4 * sim.service_ms("py"))


# -- request lifecycle --------------------------------------------------------


@pytest.mark.parametrize("provider", ["aws", "azure", "google", "ibm"])
def test_first_invocation_is_cold(provider):
    sim = _sim(provider)
    d = sim.deploy(_dep(provider, mem=512))
    assert d.state is DeploymentState.READY
    r = sim.submit(d.id, 0)
    sim.drain()
    assert r.status is Status.OK and r.cold
    r2 = sim.submit(d.id, sim.now + SEC)
    sim.drain()
    assert not r2.cold and r2.instance_id == r.instance_id


def test_aws_cold_overhead_mean():
    sim = _sim("aws", seed=3)
    sim.deploy(_dep())
    overheads = []
    for i in range(60):
        cold = sim.submit("aws-512", sim.now + SEC)
        sim.drain()
        warm = sim.submit("aws-512", sim.now + SEC)
        sim.drain()
        overheads.append((cold.latency_ns - warm.latency_ns) / MS)
        sim.force_recycle("aws-512")
    assert statistics.fmean(overheads) == pytest.approx(335, rel=0.1)


def test_ibm_rejects_request_1001():
    sim = _sim("ibm")
    sim.deploy(_dep("ibm"))
    reqs = [sim.submit("ibm-512", 0) for _ in range(1001)]
    rejected = [r for r in reqs if r.status is Status.REJECTED]
    assert len(rejected) == 1 and rejected[0] is reqs[-1]
    sim.drain()
    assert sum(r.status is Status.OK for r in reqs) == 1000


def test_queue_bound_rejects_overflow():
    sim = _sim("azure")
    sim.deploy(_dep("azure"))
    p = PROFILES["azure"]
    reqs = [sim.submit("azure-512", 0) for _ in range(1000)]
    admitted = [r for r in reqs if r.status is not Status.REJECTED]
    assert len(admitted) <= p.instance_cap + p.queue_capacity
    assert len(reqs) - len(admitted) > 0


def test_timeout_for_long_queue():
    profile = with_scale_out(PROFILES["aws"], effective_instance_cap=1)
    sim = _sim(profile=profile)
    sim.deploy(_dep(timeout_ms=3000))
    reqs = [sim.submit("aws-512", 0) for _ in range(5)]
    sim.drain()
    assert {r.status for r in reqs} == {Status.OK, Status.TIMEOUT}
    assert sim.counters["timed_out"] >= 1


def test_recycle_after_idle():
    sim = _sim("aws")
    sim.deploy(_dep())
    sim.submit("aws-512", 0)
    sim.drain()
    assert sim.instance_count("aws-512") == 1
    sim.run_until(sim.now)  # idle for 0 s: unchanged
    assert sim.instance_count("aws-512") == 1
    sim.run_until(sim.now + 11 * MIN)
    assert sim.instance_count("aws-512") == 0
    assert 570 * SEC <= sim.recycle_times[0] <= 630 * SEC


def test_google_recycle_window():
    sim = _sim("google", seed=11)
    sim.deploy(_dep("google"))
    t = 0
    for _ in range(40):
        sim.submit("google-512", t)
        sim.drain()
        t = sim.now + 11 * 3600 * SEC
        sim.run_until(t)
    assert len(sim.recycle_times) == 40
    assert all(600 * SEC <= x <= 36000 * SEC for x in sim.recycle_times)


def test_force_recycle_and_removal():
    sim = _sim("aws")
    sim.deploy(_dep())
    sim.submit("aws-512", 0)
    sim.drain()
    assert sim.force_recycle("aws-512") == 1
    assert sim.submit("aws-512", sim.now + 1).cold
    sim.remove("aws-512")
    with pytest.raises(NotDeployed):
        sim.submit("aws-512", sim.now + 2)


def test_invalid_memory_and_clock():
    sim = _sim("google")
    with pytest.raises(SimError):
        sim.deploy(_dep("google", mem=384))
    sim.run_until(10)
    with pytest.raises(SimError):
        sim.run_until(5)


def _trace(provider, seed, gaps):
    sim = _sim(provider, seed=seed, record_log=True)
    sim.deploy(_dep(provider, mem=512, dep_id="d"))
    t, reqs = 0, []
    for gap in gaps:
        t += gap
        reqs.append(sim.submit("d", t))
    sim.drain()
    return sim, reqs


@given(st.sampled_from(["aws", "azure", "google", "ibm"]), st.integers(0, 2 ** 16),
       st.lists(st.integers(0, 300 * MS), min_size=1, max_size=80))
@settings(max_examples=40, deadline=None)
def test_deterministic_for_seed(provider, seed, gaps):
    a, _ = _trace(provider, seed, gaps)
    b, _ = _trace(provider, seed, gaps)
    assert a.log == b.log


@given(st.sampled_from(["aws", "azure", "google", "ibm"]), st.integers(0, 100),
       st.lists(st.integers(0, 200 * MS), min_size=1, max_size=150), st.integers(1, 20))
@settings(max_examples=40, deadline=None)
def test_conservation_and_cap(provider, seed, gaps, cap):
    profile = with_scale_out(PROFILES[provider], effective_instance_cap=min(cap, PROFILES[provider].max_instances),
                             queue_capacity=cap)
    sim = _sim(profile=profile, seed=seed)
    sim.deploy(_dep(provider, dep_id="d", timeout_ms=2000))
    t = 0

    def check():
        c = sim.counters
        assert c["admitted"] == c["completed"] + c["rejected"] + c["timed_out"] + sim.in_flight()
        assert sim.instance_count("d") <= profile.instance_cap

    for gap in gaps:
        t += gap
        sim.submit("d", t)
        check()
    while sim.in_flight():
        sim.run_until(sim.next_event_time())
        check()
    assert all(n <= profile.instance_cap for _, n in sim.instance_trace("d"))


@given(st.integers(0, 1000), st.lists(st.integers(0, 2 * SEC), min_size=1, max_size=60))
@settings(max_examples=40, deadline=None)
def test_cold_flag_iff_spawned(seed, gaps):
    sim, reqs = _trace("google", seed, gaps)
    spawned = {ev.request_id for ev in sim.log if ev.kind == "spawn"}
    for r in reqs:
        if r.status is Status.OK:
            assert r.cold == (r.rid in spawned)


def test_calibration_registry():
    assert "azure-python-saturation" in CALIBRATIONS
    p = calibrated_profile("azure-python-saturation")
    assert p.instance_cap == 12
    sim = ProviderSim(p)
    sim.deploy(_dep("azure", mem=1536, runtime="python3.7", workload="matrix"))
    assert sim.service_ms("azure-1536") == pytest.approx(400)
    with pytest.raises(KeyError):
        calibrated_profile("nope")


def test_census_counts():
    sim, reqs = _trace("aws", 0, [0] * 10)
    assert sim.census() == {"admitted": 10, "completed": 10, "rejected": 0, "timed_out": 0,
                            "in_flight": 0, "instances": 10}


# -- HTTP frontend --------------------------------------------------------------


def _get(url):
    try:
        with urllib.request.urlopen(url, timeout=30) as resp:
            return resp.status, resp.headers, resp.read()
    except urllib.error.HTTPError as err:
        return err.code, err.headers, err.read()


@pytest.fixture
def fast_aws():
    # shrink delays so wall-clock tests stay quick
    base = PROFILES["aws"]
    profile = replace(base, cold_start_ms={"default": replace(base.cold_start_ms["default"], mean_ms=30,
                                                                 spread_ms=3)},
                      network_ms={r: 5.0 for r in base.regions})
    sim = ProviderSim(profile, seed=1)
    sim.deploy(_dep(workload="netlatency"))
    with serve_http(sim) as srv:
        yield sim, srv


def test_http_headers_and_admin(fast_aws):
    sim, srv = fast_aws
    url = deployment_url(srv, "aws-512")
    code, h, body = _get(url)
    assert code == 200
    assert h["x-sim-cold"] == "1" and h["x-sim-instance-id"].startswith("aws-")
    assert h["x-sim-region"] == "eu-central-1" and float(h["x-exec-ms"]) > 0
    assert json.loads(body)["status"] == "Ok"
    code, h2, _ = _get(url)
    assert h2["x-sim-cold"] == "0" and h2["x-sim-instance-id"] == h["x-sim-instance-id"]
    assert json.loads(_get(srv.url + "/_admin/instances")[2]) == {"aws-512": 1}
    trace = json.loads(_get(srv.url + "/_admin/trace?deployment=aws-512")[2])["trace"]
    assert trace[-1][1] == 1
    assert json.loads(_get(srv.url + "/_admin/census")[2])["completed"] == 2
    assert _get(srv.url + "/_admin/trace?deployment=zzz")[0] == 404


def test_http_removed_deployment_is_404(fast_aws):
    sim, srv = fast_aws
    assert _get(deployment_url(srv, "aws-512"))[0] == 200
    srv.call(sim.remove, "aws-512")
    assert _get(deployment_url(srv, "aws-512"))[0] == 404
    assert _get(srv.url + "/elsewhere")[0] == 404


def test_http_burst_rejected_beyond_queue():
    profile = with_scale_out(PROFILES["azure"], effective_instance_cap=2, queue_capacity=3)
    sim = ProviderSim(profile)
    sim.deploy(_dep("azure", workload="netlatency"))
    with serve_http(sim) as srv:
        url = deployment_url(srv, "azure-512")
        with ThreadPoolExecutor(20) as pool:
            codes = list(pool.map(lambda _: _get(url)[0], range(20)))
    assert codes.count(429) >= 20 - 2 - 3
    assert set(codes) <= {200, 429, 504}
