"""Integrated charging scheduling and operational control for electric bus networks."""

__version__ = "0.1.0"

from .config import (
    ConfigError,
    CostParams,
    LineConfig,
    LinkConfig,
    NetworkConfig,
    StopConfig,
    ValidatedNetwork,
    config_violations,
    load_network,
    pwl_energy,
    save_network,
    validate_config,
)
from .horizon import BusState, HorizonInstance, build_horizon, initial_states
from .soc_targets import (
    charging_weights,
    sigma_breakpoints,
    sigma_desired,
    sigma_goal_linear,
    sigma_goal_tou,
)

__all__ = [
    "ConfigError",
    "CostParams",
    "LineConfig",
    "LinkConfig",
    "NetworkConfig",
    "StopConfig",
    "ValidatedNetwork",
    "BusState",
    "HorizonInstance",
    "build_horizon",
    "initial_states",
    "config_violations",
    "load_network",
    "save_network",
    "validate_config",
    "pwl_energy",
    "charging_weights",
    "sigma_breakpoints",
    "sigma_desired",
    "sigma_goal_linear",
    "sigma_goal_tou",
]
