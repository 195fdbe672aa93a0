"""Scenarios, metrics, config files, export and the command line."""

from ..metrics import EMPTY, MetricLedger, cdf, efficiency, rtt_stats
from .scenarios import SCENARIOS, InvalidScenario, RunResult, Scenario, default_scenario, run

__all__ = [
    "EMPTY", "InvalidScenario", "MetricLedger", "RunResult", "SCENARIOS", "Scenario", "cdf",
    "default_scenario", "efficiency", "rtt_stats", "run",
]
