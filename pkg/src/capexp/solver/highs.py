"""Adapter to the HiGHS LP/MIP solver through ``highspy``."""
from __future__ import annotations

import numpy as np

from .base import INFEASIBLE, NO_INCUMBENT, OPTIMAL, TIME_LIMIT, UNBOUNDED, LPResult, MILPResult
from .model import EQ, GE, LE, FEAS_TOL, LinearModel, SolverError

try:
    import highspy
except ImportError:  # pragma: no cover - exercised only without the dependency
    highspy = None

INF = 1e30
# looser settings tried in turn when HiGHS rejects its own solution as a solve error
RETRY_OPTIONS = ({"mip_feasibility_tolerance": 1e-6}, {"presolve": "off"})


def _lp(model: LinearModel, integer: bool):
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_rows
    lp.col_cost_ = np.asarray(model.c, float)
    lp.col_lower_ = np.where(np.isneginf(model.lb), -INF, model.lb)
    lp.col_upper_ = np.where(np.isposinf(model.ub), INF, model.ub)
    rhs = model.rhs
    lp.row_lower_ = np.where(model.sense == LE, -INF, rhs)
    lp.row_upper_ = np.where(model.sense == GE, INF, rhs)
    lp.offset_ = float(model.offset)
    A = model.A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    lp.a_matrix_.num_col_ = model.num_vars
    lp.a_matrix_.num_row_ = model.num_rows
    if integer:
        lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                           for f in model.integer]
    return lp


def _instance(threads: int = 1):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", threads)
    h.setOptionValue("primal_feasibility_tolerance", 1e-7)
    h.setOptionValue("dual_feasibility_tolerance", 1e-7)
    h.setOptionValue("random_seed", 0)
    return h


class HighsBackend:
    name = "highs"

    def solve_lp(self, model: LinearModel) -> LPResult:
        h = _instance()
        h.passModel(_lp(model, integer=False))
        h.run()
        status = h.getModelStatus()
        S = highspy.HighsModelStatus
        if status == S.kUnboundedOrInfeasible:
            h.setOptionValue("presolve", "off")
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        if status == S.kOptimal:
            sol = h.getSolution()
            x = np.array(sol.col_value)
            return LPResult(OPTIMAL, x, float(h.getInfo().objective_function_value),
                            np.array(sol.row_dual), np.array(sol.col_dual))
        if status == S.kInfeasible:
            return LPResult(INFEASIBLE)
        if status == S.kUnbounded:
            return LPResult(UNBOUNDED)
        if status == S.kUnboundedOrInfeasible:
            from .base import phase_one
            p1, _ = phase_one(model)
            res = self.solve_lp(p1)
            return LPResult(INFEASIBLE if res.objective > FEAS_TOL else UNBOUNDED)
        raise SolverError(f"HiGHS LP returned {h.modelStatusToString(status)}")

    def solve_milp(self, model: LinearModel, gap: float, time_limit: float | None) -> MILPResult:
        h = _instance()
        h.setOptionValue("mip_rel_gap", float(gap))
        h.setOptionValue("mip_abs_gap", 1e-9 if gap == 0 else 1e-6)
        h.setOptionValue("mip_feasibility_tolerance", 1e-7)
        if time_limit is not None:
            h.setOptionValue("time_limit", float(max(time_limit, 1e-3)))
        h.passModel(_lp(model, integer=True))
        h.run()
        S = highspy.HighsModelStatus
        status = h.getModelStatus()
        for options in RETRY_OPTIONS:
            if status != S.kSolveError:
                break
            for key, value in options.items():
                h.setOptionValue(key, value)
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        info = h.getInfo()
        has_sol = info.primal_solution_status == 2
        x = np.array(h.getSolution().col_value) if has_sol else None
        if x is not None:
            x = _snap(model, x)
        obj = model.objective(x) if x is not None else np.nan
        bound = float(info.mip_dual_bound)
        if not np.isfinite(bound) or abs(bound) >= INF:
            bound = -np.inf
        if x is not None:
            bound = min(bound, obj)
        nodes = int(info.mip_node_count)
        if status == S.kOptimal:
            return MILPResult(OPTIMAL, x, obj, bound, nodes)
        if status == S.kInfeasible:
            return MILPResult(INFEASIBLE, nodes=nodes)
        if status in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return MILPResult(UNBOUNDED if status == S.kUnbounded else INFEASIBLE, nodes=nodes)
        if status in (S.kTimeLimit, S.kIterationLimit, S.kInterrupt, S.kSolutionLimit):
            return MILPResult(TIME_LIMIT if x is not None else NO_INCUMBENT, x, obj, bound, nodes)
        raise SolverError(f"HiGHS MIP returned {h.modelStatusToString(status)}")


def _snap(model: LinearModel, x: np.ndarray) -> np.ndarray:
    """Round integer columns that are within tolerance of an integer."""
    x = x.copy()
    ints = model.integer
    r = np.round(x[ints])
    close = np.abs(x[ints] - r) <= 1e-6
    x[np.flatnonzero(ints)[close]] = r[close]
    return np.clip(x, model.lb, model.ub)
