"""Turn a :class:`RunConfig` into an instance and dispatch it to a solver."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .baselines import solve_benders_monolithic, solve_cg, solve_direct
from .config import RunConfig
from .grid import PowerSystem, load_system
from .ncd import SolveResult, TraceRow, solve_ncd
from .scenario import ScenarioSet, ScenarioTree, build_scenario_tree, sample_all

SOLVERS: dict[str, Callable[..., SolveResult]] = {
    "ncd": solve_ncd,
    "cg": solve_cg,
    "benders": solve_benders_monolithic,
    "direct": solve_direct,
}


@dataclass(frozen=True, eq=False)
class Instance:
    system: PowerSystem
    tree: ScenarioTree
    scenarios: ScenarioSet


def build_instance(config: RunConfig, *, system: PowerSystem | None = None, seed: int | None = None) -> Instance:
    """Load the system, build the tree and sample the fine scenarios for ``config``.

    ``seed`` overrides ``config.seed`` for the scenario draw only, which is how
    out-of-sample evaluations get fresh scenarios on the same tree.
    """
    if system is None:
        system = load_system(config.system, voll=config.voll)
    if config.reserve_margin is not None:
        system = system.with_overrides(reserve_margin=config.reserve_margin)
    tree = build_scenario_tree(config.stages, branch_probabilities=config.branch_probabilities,
                               discount=config.discount, days=config.days)
    scenarios = sample_all(system, tree, config.scenarios, config.seed if seed is None else seed,
                           hours=config.hours, deterministic=config.deterministic_lower_level)
    return Instance(system, tree, scenarios)


def run(config: RunConfig, instance: Instance | None = None, *,
        progress: Callable[[TraceRow], None] | None = None) -> SolveResult:
    instance = instance or build_instance(config)
    return SOLVERS[config.algorithm](instance.system, instance.tree, instance.scenarios, config, progress=progress)
