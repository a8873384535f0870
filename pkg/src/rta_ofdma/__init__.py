"""Uplink OFDMA resource allocation for real-time traffic: NUORA, NGRA and NCRA."""

from .core import Algorithm, ConfigError, ContractViolation, SimConfig, validate_config
from .engine import RunResult, Simulation, run, run_replications
from .schedulers import Mode, make_scheduler

__all__ = [
    "Algorithm",
    "ConfigError",
    "ContractViolation",
    "Mode",
    "RunResult",
    "SimConfig",
    "Simulation",
    "make_scheduler",
    "run",
    "run_replications",
    "validate_config",
]
__version__ = "0.1.0"
