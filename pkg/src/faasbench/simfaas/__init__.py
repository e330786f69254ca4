"""Simulated FaaS providers: the event engine, calibrations, HTTP frontend."""

from faasbench.simfaas.calibration import CALIBRATIONS, azure_python_saturation, calibrated_profile
from faasbench.simfaas.engine import (
    MS,
    SEC,
    InstanceState,
    InstanceStatus,
    NotDeployed,
    ProviderSim,
    Request,
    SimError,
    SimEvent,
    service_time,
)

__all__ = [
    "CALIBRATIONS", "MS", "SEC", "InstanceState", "InstanceStatus", "NotDeployed", "ProviderSim",
    "Request", "SimError", "SimEvent", "azure_python_saturation", "calibrated_profile",
    "service_time",
]
