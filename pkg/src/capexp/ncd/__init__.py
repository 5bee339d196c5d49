"""Nested cross decomposition engine."""
from .cuts import (BENDERS_FEASIBILITY, BENDERS_OPTIMALITY, INTEGER_FEASIBILITY, INTEGER_OPTIMALITY,
                   MONOTONE_OPTIMALITY, Cut, CutPool, make_benders_feasibility_cut, make_benders_optimality_cut,
                   make_integer_feasibility_cut, make_integer_optimality_cut, make_monotone_cut)
from .engine import (BoundsTrace, ExpansionPlan, NCDSolver, SolveResult, TraceRow, branch_if_fractional,
                     compute_bounds, relative_gap, solve_ncd)
from .evaluator import NodeValue, ScenarioEvaluator
from .parallel import WorkerPool


def price_node(solver: NCDSolver, node: int, psi, psi0: float):
    """Run the integer L-shaped pricing loop of ``node`` against the solver's cut pool."""
    return solver.price_node(node, psi, psi0)


__all__ = [
    "BENDERS_FEASIBILITY", "BENDERS_OPTIMALITY", "INTEGER_FEASIBILITY", "INTEGER_OPTIMALITY", "MONOTONE_OPTIMALITY",
    "BoundsTrace", "Cut", "CutPool", "ExpansionPlan", "NCDSolver", "NodeValue", "ScenarioEvaluator", "SolveResult",
    "TraceRow", "WorkerPool", "branch_if_fractional", "compute_bounds", "make_benders_feasibility_cut",
    "make_benders_optimality_cut", "make_integer_feasibility_cut", "make_integer_optimality_cut",
    "make_monotone_cut", "price_node", "relative_gap", "solve_ncd",
]
