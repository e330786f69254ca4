"""Named calibration overlays on top of the builtin provider profiles.

The builtin profiles carry what was observed directly (caps, cold-start
means, recycle windows). Some experiments need constants that were solved
backwards from a measured outcome; those live here, each under a name, so a
run records which assumption it used.
"""

from __future__ import annotations

from dataclasses import replace

from faasbench.model import ProviderProfile, builtin_profiles

# Azure Linux consumption plan serving the Python matrix function: a dozen
# instances at most, one new instance every twenty seconds, and a service time
# that caps steady throughput at 12 / 0.4 s = 30 req/s.
AZURE_PYTHON_SERVICE_MS = 400.0
AZURE_PYTHON_CAP = 12
AZURE_PYTHON_SPAWN_RATE = 0.05


def azure_python_saturation() -> ProviderProfile:
    az = builtin_profiles()["azure"]
    # FixedBand multiplies base work by 1792/1536; undo that so the
    # 128x128 matrix job takes exactly AZURE_PYTHON_SERVICE_MS.
    base = AZURE_PYTHON_SERVICE_MS * 1536 / 1792
    return replace(
        az,
        scale_out=replace(
            az.scale_out,
            effective_instance_cap=AZURE_PYTHON_CAP,
            max_spawn_rate=AZURE_PYTHON_SPAWN_RATE,
            spawn_latency_ms=0.0,
        ),
        service=replace(az.service, base_work_ms_at_1vcpu=base),
    )


CALIBRATIONS = {
    "azure-python-saturation": azure_python_saturation,
}


def calibrated_profile(name: str) -> ProviderProfile:
    try:
        return CALIBRATIONS[name]()
    except KeyError:
        raise KeyError(f"unknown calibration {name!r}; known: {', '.join(CALIBRATIONS)}") from None
