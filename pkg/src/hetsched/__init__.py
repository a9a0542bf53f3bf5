"""Two-timescale network selection and resource allocation for a macrocell
with Wi-Fi offloading: drift-plus-penalty schedulers, a DCF throughput/energy
model, a grid mobility environment, and a simulation engine with CSV output.
"""
from .config import ConfigError, SystemConfig, config_from_mapping, load_config
from .engine import ALGORITHMS, BoundReport, RunMetrics, bound_report, run, sweep
from .model import ConstraintViolation

__all__ = [
    "ALGORITHMS",
    "BoundReport",
    "ConfigError",
    "ConstraintViolation",
    "RunMetrics",
    "SystemConfig",
    "bound_report",
    "config_from_mapping",
    "load_config",
    "run",
    "sweep",
]

__version__ = "0.1.0"
