"""Reference algorithms: the extensive form, plain column generation,
monolithic integer L-shaped Benders, and out-of-sample plan evaluation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .config import RunConfig, effective_threads
from .formulations import Column, build_extensive, build_uc, reserve_rows
from .grid import PowerSystem
from .ncd.cuts import (Cut, CutPool, aggregate_gradient_cut, make_benders_feasibility_cut,
                       make_integer_feasibility_cut, make_integer_optimality_cut, make_monotone_cut)
from .ncd.engine import (CONVERGED, INFEASIBLE_PLAN, ITERATION_LIMIT, TIME_LIMIT, BoundsTrace, ExpansionPlan,
                         NCDSolver, PricingResult, SolveResult, TraceRow, relative_gap, theta_tol)
from .ncd.evaluator import NodeValue, ScenarioEvaluator
from .ncd.parallel import WorkerPool
from .scenario import ScenarioSet, ScenarioTree, node_parameters
from .solver import INFEASIBLE, ModelBuilder, solve_milp
from .solver.base import TIME_LIMIT as MILP_TIME_LIMIT
from .solver.model import SolverError

log = logging.getLogger(__name__)


def _capital(tree: ScenarioTree, params, builds: Mapping[int, np.ndarray]) -> float:
    return sum(tree.node(n).probability * float(params[n].capital_cost @ builds[n]) for n in tree.ids)


# -- direct -----------------------------------------------------------------
def solve_direct(system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, config: RunConfig, *,
                 progress: Callable[[TraceRow], None] | None = None) -> SolveResult:
    """Solve the deterministic equivalent in one MILP.

    Raises :class:`~capexp.formulations.ModelTooLarge` above ``config.max_vars``.
    """
    start = time.monotonic()
    params = {n: node_parameters(tree, n, system) for n in tree.ids}
    ef = build_extensive(system, tree, scenarios, params=params, segments=config.segments,
                         max_vars=config.max_vars)
    res = solve_milp(ef.model, gap=min(config.gap, 1e-4), time_limit=config.time_limit, backend=config.backend)
    trace = BoundsTrace()
    assets = tuple(a.id for a in system.candidate_assets)
    if not res.has_incumbent:
        status = INFEASIBLE_PLAN if res.status == INFEASIBLE else TIME_LIMIT
        return SolveResult("direct", status, None, np.inf, float(res.bound), trace, seconds=time.monotonic() - start)
    builds = {n: np.round(res.x[idx]) for n, idx in ef.x.items()}
    lb = float(min(res.bound, res.objective)) if np.isfinite(res.bound) else float(res.objective)
    row = TraceRow(1, lb, float(res.objective), relative_gap(lb, res.objective), time.monotonic() - start, 1, 0, 0)
    trace.append(row)
    if progress is not None:
        progress(row)
    op: dict[int, list[float]] = {n: [0.0] * len(tree.days) for n in tree.ids}
    for n, day, sid, y in ef.uc_blocks:
        sc = next(s for s in scenarios.get(n, day) if s.id == sid)
        uc = build_uc(system, None, sc, segments=config.segments)
        op[n][tree.days.index(day)] += sc.weight * float(uc.model.c @ res.x[y] + uc.model.offset)
    status = CONVERGED if res.status != MILP_TIME_LIMIT else TIME_LIMIT
    return SolveResult("direct", status, ExpansionPlan(builds, assets), float(res.objective), lb, trace,
                       _capital(tree, params, builds), {n: tuple(v) for n, v in op.items()}, len(ef.uc_blocks), 1,
                       seconds=time.monotonic() - start, stats={"variables": ef.model.num_vars,
                                                                "upper_binaries": ef.num_upper_binaries})


# -- column generation with monolithic pricing --------------------------------
class ColumnGenerationSolver(NCDSolver):
    """Same outer loop as NCD; each node is priced by one MILP holding all its scenarios."""

    name = "cg"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self._blocks: dict[int, list] = {}

    def _node_blocks(self, node: int):
        if node not in self._blocks:
            w = self.tree.weight(node)
            self._blocks[node] = [(w * wt, uc) for _, wt, uc in self.evaluator._problems(node)]
        return self._blocks[node]

    def price_node(self, node: int, psi: np.ndarray, psi0: float, z_ub=None) -> PricingResult:
        b = ModelBuilder()
        z = b.add_vars(self.k, ub=1.0 if z_ub is None else z_ub, cost=-np.asarray(psi), integer=True, name="z")
        b.offset = -float(psi0)
        for cut in self._reserve_cuts(node):
            nz = np.flatnonzero(cut.rho)
            b.add_row(z[nz], cut.rho[nz], ">=", cut.rhs, name="reserve")
        for w, uc in self._node_blocks(node):
            m = uc.model
            y = b.add_vars(m.num_vars, lb=m.lb, ub=m.ub, cost=w * m.c, integer=m.integer)
            A, Cz = m.A.tocoo(), uc.Cz.tocoo()
            b.add_rows(m.num_rows, np.r_[A.row, Cz.row], np.r_[y[A.col], z[Cz.col]], np.r_[A.data, -Cz.data],
                       m.sense, uc.rhs0, name="uc")
            b.offset += w * m.offset
        res = solve_milp(b.build(), gap=1e-6, backend=self.config.backend)
        self.evaluator.counter.add(milp=1)
        if res.status == INFEASIBLE:
            return PricingResult(node, np.inf, None, None, 0, 1)
        if not res.has_incumbent:
            raise SolverError(f"node {node}: pricing MILP returned {res.status}")
        z_hat = tuple(int(v) for v in np.round(res.x[z]))
        bound = float(min(res.bound, res.objective))
        col = None
        if res.objective < -1e-6:
            col = Column(node, z_hat, self.evaluator.exact(node, z_hat).per_day, self.iteration)
        return PricingResult(node, bound, col, z_hat, 0, 1)

    def _result(self, status: str) -> SolveResult:
        out = super()._result(status)
        out.algorithm = self.name
        return out


def solve_cg(system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, config: RunConfig, *,
             progress: Callable[[TraceRow], None] | None = None) -> SolveResult:
    """Column generation whose pricing problems are solved as monolithic MILPs."""
    with WorkerPool(effective_threads(config.threads)) as pool:
        return ColumnGenerationSolver(system, tree, scenarios, config, progress=progress, pool=pool).solve()


# -- monolithic Benders ------------------------------------------------------
@dataclass
class _BendersMaster:
    model: object
    x: dict[int, np.ndarray]
    z: dict[int, np.ndarray]
    theta: dict[int, np.ndarray]


class BendersSolver:
    """Integer L-shaped method with one master over the whole tree.

    The master keeps the build binaries, the node coverages and one recourse
    estimate per (node, day), or per scenario with ``multicut``; cuts from
    every node's subproblems are added to it until the bounds meet.
    """

    def __init__(self, system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, config: RunConfig, *,
                 pool: WorkerPool | None = None, progress: Callable[[TraceRow], None] | None = None):
        self.system, self.tree, self.config = system, tree, config
        self.params = {n: node_parameters(tree, n, system) for n in tree.ids}
        self.pool = pool or WorkerPool(effective_threads(config.threads))
        self.evaluator = ScenarioEvaluator(system, tree, scenarios, segments=config.segments, mip_gap=config.mip_gap,
                                           backend=config.backend, pool=self.pool, dump_dir=config.dump_models)
        self.progress = progress
        self.k = system.n_candidates
        self.assets = tuple(a.id for a in system.candidate_assets)
        self.pools = {n: CutPool(n) for n in tree.ids}
        self.trace = BoundsTrace()
        self.start = time.monotonic()
        self.best_ub, self.best_plan, self.best_detail = np.inf, None, {}
        self.lb_record = -np.inf

    def _n_theta(self, n: int) -> int:
        return self.evaluator.num_scenarios(n) if self.config.multicut else len(self.tree.days)

    def _split(self, n: int, values, grads=None):
        """Group weighted scenario terms by recourse estimate (per day, or per scenario with multicut)."""
        if self.config.multicut:
            return list(values), None if grads is None else list(grads)
        day = self.evaluator.day_of_scenario(n)
        m = len(self.tree.days)
        v = np.bincount(day, weights=values, minlength=m)
        if grads is None:
            return list(v), None
        g = np.zeros((m, self.k))
        np.add.at(g, day, grads)
        return list(v), list(g)

    def master(self) -> _BendersMaster:
        tree, k = self.tree, self.k
        b = ModelBuilder()
        x = {n: b.add_vars(k, ub=1.0, cost=tree.node(n).probability * self.params[n].capital_cost, integer=True,
                           name=f"x{n}") for n in tree.ids}
        z, theta = {}, {}
        for n in tree.ids:
            path = tree.path(n)
            z[n] = b.add_vars(k, ub=1.0, name=f"z{n}")
            rows = np.r_[np.arange(k), np.tile(np.arange(k), len(path))]
            cols = np.r_[z[n], np.concatenate([x[m] for m in path])]
            b.add_rows(k, rows, cols, np.r_[np.ones(k), -np.ones(k * len(path))], "=", 0.0, name=f"cumulative{n}")
            b.add_rows(k, np.arange(k), z[n], 1.0, "<=", 1.0, name=f"split{n}")
            credit, need = reserve_rows(self.system, self.params[n].peak_by_region)
            rr, cc = np.nonzero(credit)
            b.add_rows(len(need), rr, z[n][cc], credit[rr, cc], ">=", need, name=f"reserve{n}")
            theta[n] = b.add_vars(self._n_theta(n), cost=1.0, name=f"theta{n}")
        for n in tree.ids:
            for cut in self.pools[n]:
                nz = np.flatnonzero(cut.rho)
                if cut.nu == 0:
                    tc, tv = theta[n][:0], np.zeros(0)
                elif cut.theta_index is None:
                    tc, tv = theta[n], np.full(len(theta[n]), cut.nu)
                else:
                    tc, tv = theta[n][[cut.theta_index]], np.array([cut.nu])
                b.add_row(np.r_[z[n][nz], tc], np.r_[cut.rho[nz], tv], ">=", cut.rhs, name="cut")
        return _BendersMaster(b.build(), x, z, theta)

    def _node_cuts(self, n: int, z_hat: np.ndarray, theta: np.ndarray, it: int) -> tuple[list[Cut], bool]:
        """Violated cuts at the master point, and whether the node was evaluated exactly."""
        lpv = self.evaluator.lp(n, z_hat)
        if not lpv.feasible:
            return [make_benders_feasibility_cut(inf.certificate, inf.problem.model, inf.problem.rhs0, inf.problem.Cz,
                                                 node=n, iteration=it) for inf in lpv.infeasible], False
        vals, grads = self._split(n, lpv.scenario_values, lpv.scenario_gradients)
        cuts = [aggregate_gradient_cut(v, g, z_hat, node=n, iteration=it, theta_index=p)
                for p, (v, g) in enumerate(zip(vals, grads)) if theta[p] < v - theta_tol(v)]
        if cuts:
            return cuts, False
        ex = self.evaluator.exact(n, z_hat)
        if not ex.feasible:
            return [make_integer_feasibility_cut(z_hat, node=n, iteration=it)], True
        vals, _ = self._split(n, ex.scenario_values)
        lows, _ = self._split(n, ex.scenario_bounds)
        cuts = []
        for p, (v, b) in enumerate(zip(vals, lows)):
            if theta[p] < v - theta_tol(v):
                cuts.append(make_integer_optimality_cut(z_hat, v, node=n, iteration=it, theta_index=p))
                if self.config.monotone_cuts and b > 0:
                    cuts.append(make_monotone_cut(z_hat, b, node=n, iteration=it, theta_index=p))
        return cuts, True

    def solve(self) -> SolveResult:
        cfg = self.config
        status = ITERATION_LIMIT
        it = 0
        for it in range(1, cfg.max_outer + 1):
            mp = self.master()
            res = solve_milp(mp.model, gap=1e-9, backend=cfg.backend)
            if not res.has_incumbent:
                status = INFEASIBLE_PLAN
                break
            builds = {n: np.round(res.x[idx]) for n, idx in mp.x.items()}
            plan = ExpansionPlan(builds, self.assets)
            cov = plan.coverage(self.tree)

            def node_cuts(n, it=it):
                return self._node_cuts(n, cov[n], res.x[mp.theta[n]], it)

            out = self.pool.map_nodes(node_cuts, self.tree.ids)
            added = sum(self.pools[n].add(c) for n, (cs, _) in zip(self.tree.ids, out) for c in cs)
            if all(exact for _, exact in out):
                self._offer(builds, cov)
            lb = float(res.bound) if np.isfinite(res.bound) else float(res.objective)
            self.lb_record = max(self.lb_record, min(lb, self.best_ub))
            row = TraceRow(it, self.lb_record, self.best_ub, relative_gap(self.lb_record, self.best_ub),
                           time.monotonic() - self.start, self.evaluator.subproblem_solves, 0, added)
            self.trace.append(row)
            if self.progress is not None:
                self.progress(row)
            if row.gap <= cfg.gap or (added == 0 and self.best_plan is not None):
                status = CONVERGED
                break
            if added == 0:
                raise SolverError("Benders master repeated a point without new cuts")
            if cfg.time_limit is not None and time.monotonic() - self.start >= cfg.time_limit:
                status = TIME_LIMIT
                break
        return self._result(status, it)

    def _offer(self, builds, cov) -> None:
        detail = {n: self.evaluator.exact(n, cov[n]) for n in self.tree.ids}
        value = _capital(self.tree, self.params, builds) + sum(v.value for v in detail.values())
        if value < self.best_ub:
            self.best_ub = value
            self.best_plan = ExpansionPlan(builds, self.assets)
            self.best_detail = detail

    def _result(self, status: str, iterations: int) -> SolveResult:
        plan = self.best_plan
        cap = _capital(self.tree, self.params, plan.builds) if plan is not None else np.nan
        row = self.trace.last
        return SolveResult("benders", status, plan, self.best_ub, row.lb if row else -np.inf, self.trace, cap,
                           {n: v.per_day for n, v in self.best_detail.items()}, self.evaluator.subproblem_solves,
                           iterations, cut_pools=self.pools, seconds=time.monotonic() - self.start,
                           stats={"lp_solves": self.evaluator.counter.lp, "milp_solves": self.evaluator.counter.milp,
                                  "cuts": {n: len(p) for n, p in self.pools.items()}})


def solve_benders_monolithic(system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, config: RunConfig, *,
                             progress: Callable[[TraceRow], None] | None = None) -> SolveResult:
    """Integer L-shaped method on a single tree-wide master."""
    with WorkerPool(effective_threads(config.threads)) as pool:
        return BendersSolver(system, tree, scenarios, config, pool=pool, progress=progress).solve()


# -- evaluation --------------------------------------------------------------
@dataclass
class PlanEvaluation:
    capital: float
    operating: float
    per_node: dict[int, NodeValue] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.capital + self.operating

    @property
    def feasible(self) -> bool:
        return all(v.feasible for v in self.per_node.values())

    def capacity_built(self, system: PowerSystem, plan: ExpansionPlan, tree: ScenarioTree) -> float:
        """Expected MW of new capacity, weighting each build by its node probability."""
        caps = np.array([a.capacity for a in system.candidate_assets])
        return sum(tree.node(n).probability * float(caps @ plan.builds[n]) for n in tree.ids)


def evaluate_plan(system: PowerSystem, tree: ScenarioTree, plan: ExpansionPlan, scenarios: ScenarioSet, *,
                  config: RunConfig | None = None) -> PlanEvaluation:
    """Expected total cost of a fixed plan over the given (typically out-of-sample) scenarios."""
    config = config or RunConfig()
    params = {n: node_parameters(tree, n, system) for n in tree.ids}
    with WorkerPool(effective_threads(config.threads)) as pool:
        ev = ScenarioEvaluator(system, tree, scenarios, segments=config.segments, mip_gap=config.mip_gap,
                               backend=config.backend, pool=pool)
        cov = plan.coverage(tree)
        detail = dict(zip(tree.ids, pool.map_nodes(lambda n: ev.exact(n, cov[n]), tree.ids)))
    op = sum(v.value for v in detail.values())
    return PlanEvaluation(_capital(tree, params, plan.builds), float(op), detail)

