"""Torque-actuated dissipative spring-loaded inverted pendulum: simulation,
approximate analytic stance map, parameter identification and deadbeat apex
control."""

from .flight import ApexState
from .model import (
    BoomParams,
    CartesianState,
    ConstantTorque,
    PolarStanceState,
    RampTorque,
    SystemParams,
    load_params,
)
from .return_map import Backend, Status, apex_return_map, simulate_stride

__all__ = [
    "ApexState",
    "Backend",
    "BoomParams",
    "CartesianState",
    "ConstantTorque",
    "PolarStanceState",
    "RampTorque",
    "Status",
    "SystemParams",
    "apex_return_map",
    "load_params",
    "simulate_stride",
]
