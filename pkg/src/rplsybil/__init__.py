"""Discrete-event simulation of an RPL DODAG under power-controlled Sybil
attacks, with the UID-query trust defense and reference detectors."""

from .harness import COLUMNS, RunResult, export, run_scenario, sweep
from .metrics import MetricsReport
from .scenario import ConfigError, Defense, ScenarioConfig, load_config, parse_config
from .simulation import Network, TopologyError

__version__ = "0.1.0"

__all__ = [
    "COLUMNS", "ConfigError", "Defense", "MetricsReport", "Network", "RunResult", "ScenarioConfig",
    "TopologyError", "export", "load_config", "parse_config", "run_scenario", "sweep",
]
