"""LinearModel builders for the investment, operation and master problems."""
from .extensive import DEFAULT_MAX_VARS, ExtensiveForm, ModelTooLarge, build_extensive
from .master import Column, MasterProblem, SecondaryMaster, big_m_for, build_rpmp_lr, build_smp
from .piecewise import PiecewiseCost, piecewise_linearize
from .tic import TICNodeProblem, build_tic_node, reserve_rows
from .uc import DEFAULT_SEGMENTS, UCProblem, build_uc, coverage_vector, uc_cost_breakdown

__all__ = [
    "DEFAULT_MAX_VARS", "DEFAULT_SEGMENTS", "Column", "ExtensiveForm", "MasterProblem", "ModelTooLarge",
    "PiecewiseCost", "SecondaryMaster", "TICNodeProblem", "UCProblem", "big_m_for", "build_extensive",
    "build_rpmp_lr", "build_smp", "build_tic_node", "build_uc", "coverage_vector", "piecewise_linearize",
    "reserve_rows", "uc_cost_breakdown",
]
