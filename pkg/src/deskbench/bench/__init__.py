"""Benchmark harness: config, matrix runner, plots and the command line."""

from .config import PLANNERS, BenchConfig, config_to_dict, default_config_text, load_config
from .planners import ReplayPlanner, make_planner
from .plot import plot_episode
from .runner import Cell, CellOutcome, RunResult, plan_cells, run_benchmark, score_texts, write_manifest

__all__ = [
    "PLANNERS", "BenchConfig", "Cell", "CellOutcome", "ReplayPlanner", "RunResult",
    "config_to_dict", "default_config_text", "load_config", "make_planner", "plan_cells",
    "plot_episode", "run_benchmark", "score_texts", "write_manifest",
]
