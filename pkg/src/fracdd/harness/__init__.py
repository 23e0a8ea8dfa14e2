"""Configuration, scenario runs, studies and file outputs."""

from .config import ConfigError, ScenarioConfig, config_from_string, load_config
from .run import RunResult, build_problem, run, solve_scenario, time_grid_study

__all__ = ["ConfigError", "ScenarioConfig", "config_from_string", "load_config", "RunResult",
           "build_problem", "run", "solve_scenario", "time_grid_study"]
