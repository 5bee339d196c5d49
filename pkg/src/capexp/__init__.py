"""Multistage stochastic capacity expansion planning for power systems.

The model couples long-term build decisions on a scenario tree with
hourly unit commitment on sampled operating days. ``solve_ncd`` solves it
by nested cross decomposition; ``capexp.baselines`` holds the extensive
form, plain column generation and monolithic Benders for comparison.
"""
from .baselines import evaluate_plan, solve_benders_monolithic, solve_cg, solve_direct
from .config import RunConfig
from .grid import PowerSystem, load_system, random_system
from .ncd import ExpansionPlan, SolveResult, solve_ncd
from .reports import read_plan, write_reports
from .runner import Instance, build_instance, run
from .scenario import ScenarioSet, ScenarioTree, build_scenario_tree, sample_all, select_days

__version__ = "0.1.0"

__all__ = [
    "ExpansionPlan", "Instance", "PowerSystem", "RunConfig", "ScenarioSet", "ScenarioTree", "SolveResult",
    "build_instance", "build_scenario_tree", "evaluate_plan", "load_system", "random_system", "read_plan", "run",
    "sample_all", "select_days", "solve_benders_monolithic", "solve_cg", "solve_direct", "solve_ncd",
    "write_reports",
]
