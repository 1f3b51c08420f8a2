"""Multi-agent reinforcement-learning stock market simulator.

Agents learn price forecasting and order placement through tabular direct
policy search and trade via a centralised double-auction limit order book.
"""

from .config import (ConfigError, RngDomain, Scenario, ScenarioKind, SimConfig,
                     config_from_mapping, load_config, rng_stream, save_config,
                     validate)
from .simulator import MarketEngine, MarketRecord, PolicySnapshot, RunResult, simulate, simulate_all

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "RngDomain", "Scenario", "ScenarioKind", "SimConfig",
    "config_from_mapping", "load_config", "rng_stream", "save_config", "validate",
    "MarketEngine", "MarketRecord", "PolicySnapshot", "RunResult",
    "simulate", "simulate_all", "__version__",
]
