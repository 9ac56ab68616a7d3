"""Monte Carlo experiments over the registered figure scenarios, CSV output and the CLI."""

from .config import ConfigError, ExperimentSpec, load_config
from .report import COLUMNS, CSV_VERSION, MonteCarloReport, emit_csv, parse_csv
from .runner import ExperimentError, run_experiment
from .scenarios import SCENARIOS, Scenario, get_scenario, scenario_names

__all__ = [
    "COLUMNS", "CSV_VERSION", "ConfigError", "ExperimentError", "ExperimentSpec", "MonteCarloReport",
    "SCENARIOS", "Scenario", "emit_csv", "get_scenario", "load_config", "parse_csv", "run_experiment",
    "scenario_names",
]
