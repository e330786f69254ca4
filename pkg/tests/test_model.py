"""Provider profiles, validation and the shared record types."""

from __future__ import annotations

import random
from dataclasses import replace

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from faasbench.model import (
    ColdStartDist,
    Deployment,
    DeploymentState,
    ProfileError,
    Sample,
    ScalingLaw,
    Status,
    apply_overrides,
    builtin_profiles,
    check_runtime,
    dump_profiles,
    load_profiles,
    profile_from_dict,
    profile_to_dict,
    profiles_from_config,
    runtime_family,
    validate_memory,
)

PROFILES = builtin_profiles()


def test_builtin_names_and_limits():
    assert PROFILES.names() == ["aws", "azure", "google", "ibm"]
    assert PROFILES["aws"].max_instances == 3000
    assert PROFILES["azure"].max_instances == 200
    assert PROFILES["google"].memory_tiers == ((128, 200), (256, 400), (512, 800), (1024, 1400), (2048, 2400))
    assert PROFILES["ibm"].memory_step_mb == 32
    assert PROFILES["azure"].memory_max_mb == 1536
    assert PROFILES["azure"].scaling_law is ScalingLaw.FIXED_BAND


@pytest.mark.parametrize("profile", list(PROFILES), ids=lambda p: p.name)
def test_builtin_profiles_self_validate(profile):
    profile.validate()


@pytest.mark.parametrize("provider, mem, ok", [
    ("aws", 3008, True), ("aws", 100, False), ("aws", 200, False), ("aws", 192, True),
    ("google", 384, False), ("google", 2048, True), ("ibm", 160, True), ("ibm", 150, False),
    ("azure", 1536, True), ("azure", 2048, False),
])
def test_validate_memory(provider, mem, ok):
    assert validate_memory(PROFILES[provider], mem) is ok


def test_google_memory_is_tier_membership():
    google = PROFILES["google"]
    tiers = {m for m, _ in google.memory_tiers}
    for mem in range(64, 4096, 64):
        assert validate_memory(google, mem) is (mem in tiers)


def test_cold_start_lookup():
    aws = PROFILES["aws"]
    assert aws.cold_start_for("nodejs12.x").mean_ms == 335
    assert aws.cold_start_for("dotnet2.1").mean_ms == 1739
    assert PROFILES["ibm"].cold_start_for("python3.7").mean_ms == 935
    azure = PROFILES["azure"]
    assert azure.cold_start_for("dotnet3.1", variant="windows").mean_ms == 1917
    assert azure.cold_start_for("python3.7", variant="windows").bounds == (2000, 5000)


def test_cold_start_samples_stay_in_bounds():
    rng = random.Random(0)
    for dist in (ColdStartDist(335, 50.25), ColdStartDist(2500, 500, "uniform"), ColdStartDist(10, 0)):
        lo, hi = dist.bounds
        assert all(lo <= dist.sample(rng) <= hi for _ in range(500))


def test_network_defaults():
    assert PROFILES["aws"].network_for("eu-central-1") == 80
    assert PROFILES["google"].network_for("asia-east2") == 1770
    values = [v for p in PROFILES for v in p.network_ms.values()]
    assert sum(values) / len(values) == 538
    aws = PROFILES["aws"]
    assert aws.network_for("nowhere") == sum(aws.network_ms.values()) / len(aws.network_ms)


@pytest.mark.parametrize("label, family", [
    ("nodejs10.x", "nodejs"), ("python3.7", "python"), ("go1.13", "go"), (".NET Core 2.1", "dotnet"),
    ("java11", "java"), ("elixir", "elixir"),
])
def test_runtime_family(label, family):
    assert runtime_family(label) == family


def test_unknown_runtime_warns_but_passes(caplog):
    assert check_runtime(PROFILES["aws"], "python3.7")
    assert not check_runtime(PROFILES["aws"], "cobol")
    assert "cobol" in caplog.text


@pytest.mark.parametrize("profile", list(PROFILES), ids=lambda p: p.name)
def test_profile_round_trip(profile):
    assert profile_from_dict(profile_to_dict(profile)) == profile
    again = yaml.safe_load(dump_profiles([profile]))["profiles"][profile.name]
    assert profile_from_dict(again) == profile


@given(st.integers(1, 3000), st.floats(0.01, 100), st.integers(1, 30))
def test_profile_round_trip_with_overrides(cap, spawn_rate, queue):
    p = apply_overrides(PROFILES["aws"], {"scale_out": {"effective_instance_cap": cap,
                                                          "max_spawn_rate": spawn_rate,
                                                          "queue_capacity": queue}})
    assert p.instance_cap == cap and p.queue_capacity == queue
    assert profile_from_dict(profile_to_dict(p)) == p


def test_config_overrides_merge_nested(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"profiles": {
        "aws": {"network_ms": {"eu-central-1": 10}, "scale_out": {"effective_instance_cap": 5}},
    }}))
    profiles = load_profiles(cfg)
    aws = profiles["aws"]
    assert aws.network_for("eu-central-1") == 10
    assert aws.network_for("us-east-1") == 300
    assert aws.instance_cap == 5 and aws.queue_capacity == 50
    assert aws.pricing == PROFILES["aws"].pricing


def test_invalid_override_rejected():
    with pytest.raises(ProfileError):
        apply_overrides(PROFILES["aws"], {"max_instances": 0})
    with pytest.raises(ProfileError):
        apply_overrides(PROFILES["google"], {"memory_tiers": [[512, 800], [128, 200]]})


def test_new_profile_must_be_complete():
    with pytest.raises(ProfileError):
        profiles_from_config({"profiles": {"acme": {"max_instances": 5}}})
    full = {**profile_to_dict(PROFILES["ibm"]), "name": "acme"}
    assert profiles_from_config({"profiles": {"acme": full}})["acme"].name == "acme"


def test_validate_lists_problems():
    bad = replace(PROFILES["aws"], max_instances=0, memory_min_mb=4000, idle_recycle_s=(5.0, 1.0))
    with pytest.raises(ProfileError) as err:
        bad.validate()
    msg = str(err.value)
    assert "max_instances" in msg and "memory_min_mb" in msg and "idle_recycle_s" in msg


def test_deployment_transitions():
    d = Deployment("x", "aws", "eu-central-1", "fact", "python3.7", 256)
    assert d.state is DeploymentState.DEPLOYING
    d.transition(DeploymentState.READY)
    d.transition("Removed")
    with pytest.raises(ValueError):
        d.transition(DeploymentState.READY)
    assert Deployment.from_dict(d.to_dict()) == d
    f = Deployment("y", "aws", "eu-central-1", "fact", "python3.7", 256)
    f.transition(DeploymentState.FAILED)
    with pytest.raises(ValueError):
        f.transition(DeploymentState.REMOVED)


def test_sample_invariants():
    s = Sample("d", 0, 100, 150, 500, 450)
    assert s.ok and s.completed_at == 600
    with pytest.raises(ValueError):
        Sample("d", 0, 100, 99, 500, 400)
    with pytest.raises(ValueError):
        Sample("d", 0, 100, 100, 400, 500)
    assert not Sample("d", 1, 0, 0, 0, 0, Status.REJECTED).ok
