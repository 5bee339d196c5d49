"""Nested cross decomposition: column generation over node capacity outcomes,
priced by an integer L-shaped loop per node."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..config import RunConfig, effective_threads
from ..formulations import Column, MasterProblem, build_rpmp_lr, build_smp, reserve_rows
from ..grid import PowerSystem
from ..scenario import NodeParameters, ScenarioSet, ScenarioTree, node_parameters
from ..solver import INFEASIBLE, solve_lp, solve_milp, write_lp
from ..solver.model import INT_TOL, SolverError
from .cuts import (Cut, CutPool, aggregate_gradient_cut, make_benders_feasibility_cut, make_integer_feasibility_cut,
                   make_integer_optimality_cut, make_monotone_cut)
from .evaluator import NodeValue, ScenarioEvaluator
from .parallel import WorkerPool

log = logging.getLogger(__name__)

RC_TOL = 1e-6
EPS = 1e-9

CONVERGED = "converged"
TIME_LIMIT = "time_limit"
ITERATION_LIMIT = "iteration_limit"
INFEASIBLE_PLAN = "infeasible"
NO_COLUMNS = "no_columns"  # pricing found nothing: the node LP bound is final


def theta_tol(value: float) -> float:
    return 1e-6 + 1e-6 * abs(value)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lb: float
    ub: float
    gap: float
    seconds: float
    subproblem_solves: int
    columns_added: int
    cuts_added: int

    def key(self) -> tuple:
        """Everything except wall time, for reproducibility checks."""
        return (self.iteration, self.lb, self.ub, self.gap, self.subproblem_solves, self.columns_added,
                self.cuts_added)


@dataclass
class BoundsTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def last(self) -> TraceRow | None:
        return self.rows[-1] if self.rows else None

    def keys(self) -> list[tuple]:
        return [r.key() for r in self.rows]

    def monotone(self) -> bool:
        lbs = [r.lb for r in self.rows]
        ubs = [r.ub for r in self.rows]
        return all(b >= a for a, b in zip(lbs, lbs[1:])) and all(b <= a for a, b in zip(ubs, ubs[1:]))


@dataclass(frozen=True, eq=False)
class ExpansionPlan:
    """Build decisions per tree node, in candidate-asset order."""

    builds: Mapping[int, np.ndarray]
    asset_ids: tuple[str, ...]

    def coverage(self, tree: ScenarioTree) -> dict[int, np.ndarray]:
        return {n: np.minimum(sum(self.builds[m] for m in tree.path(n)), 1.0) for n in tree.ids}

    def built(self, node: int) -> list[str]:
        return [a for a, v in zip(self.asset_ids, self.builds[node]) if v > 0.5]

    def as_tuple(self) -> tuple:
        return tuple((n, tuple(int(round(v)) for v in self.builds[n])) for n in sorted(self.builds))

    def __eq__(self, other) -> bool:
        return isinstance(other, ExpansionPlan) and self.as_tuple() == other.as_tuple()

    def __hash__(self) -> int:
        return hash(self.as_tuple())


@dataclass
class PricingResult:
    node: int
    objective: float  # [SMP_n]*, a lower bound on the node's minimum reduced cost
    column: Column | None
    z: tuple[int, ...] | None
    cuts_added: int
    inner_iterations: int
    repeated_pair: bool = False


@dataclass
class SolveResult:
    """Common result of every planning algorithm."""

    algorithm: str
    status: str
    plan: ExpansionPlan | None
    objective: float  # true cost of ``plan`` (capital + exact expected operating cost)
    lower_bound: float
    trace: BoundsTrace
    capital_cost: float = np.nan
    operating_cost: dict[int, tuple[float, ...]] = field(default_factory=dict)  # node -> per-day mean TOC
    subproblem_solves: int = 0
    iterations: int = 0
    branched: bool = False
    master_integral: bool = True
    columns: dict[int, list[Column]] = field(default_factory=dict)
    cut_pools: dict[int, CutPool] = field(default_factory=dict)
    repeated_pairs: int = 0
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return relative_gap(self.lower_bound, self.objective)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def relative_gap(lb: float, ub: float) -> float:
    if not np.isfinite(ub):
        return np.inf
    return max(0.0, (ub - lb) / max(abs(ub), EPS))


def compute_bounds(master_objective: float, smp_objectives: Sequence[float], incumbent: float) -> tuple[float, float]:
    """Lagrangian lower bound from the restricted master and pricing optima, and the incumbent."""
    lb = master_objective + sum(min(0.0, v) for v in smp_objectives if np.isfinite(v))
    return lb, incumbent


class NCDSolver:
    """Holds the state of one nested cross decomposition run."""

    def __init__(self, system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, config: RunConfig, *,
                 evaluator: ScenarioEvaluator | None = None, params: Mapping[int, NodeParameters] | None = None,
                 progress: Callable[[dict], None] | None = None, pool: WorkerPool | None = None):
        self.system = system
        self.tree = tree
        self.config = config
        self.params = dict(params or {n: node_parameters(tree, n, system) for n in tree.ids})
        self.pool = pool or WorkerPool(effective_threads(config.threads))
        self.evaluator = evaluator or ScenarioEvaluator(system, tree, scenarios, segments=config.segments,
                                                        mip_gap=config.mip_gap, backend=config.backend,
                                                        pool=self.pool, dump_dir=config.dump_models)
        self.progress = progress
        self.k = system.n_candidates
        self.assets = tuple(a.id for a in system.candidate_assets)
        self.columns: dict[int, list[Column]] = {n: [] for n in tree.ids}
        self._column_keys: dict[int, dict[tuple[int, ...], Column]] = {n: {} for n in tree.ids}
        self.pools = {n: CutPool(n) for n in tree.ids}
        self.trace = BoundsTrace()
        self.iteration = 0
        self.start = time.monotonic()
        self.best_ub = np.inf
        self.best_plan: ExpansionPlan | None = None
        self.best_detail: dict[int, NodeValue] = {}
        self._offered: set[tuple] = set()
        self.lb_record = -np.inf
        self.repeated_pairs = 0
        self.branched = False
        self.master_integral = True
        self.credit, _ = reserve_rows(system, {})
        self._needs = {n: reserve_rows(system, self.params[n].peak_by_region)[1] for n in tree.ids}

    # -- helpers -----------------------------------------------------------
    def elapsed(self) -> float:
        return time.monotonic() - self.start

    def out_of_time(self) -> bool:
        return self.config.time_limit is not None and self.elapsed() >= self.config.time_limit

    def _n_theta(self, node: int) -> int:
        return max(1, self.evaluator.num_scenarios(node)) if self.config.multicut else 1

    def add_column(self, node: int, z: Sequence[int], value: NodeValue) -> bool:
        key = tuple(int(v) for v in z)
        old = self._column_keys[node].get(key)
        if old is not None:
            if not np.allclose(old.toc, value.per_day, rtol=1e-6, atol=1e-6):
                raise SolverError(f"node {node}: inconsistent operating cost for a repeated column")
            return False
        col = Column(node, key, tuple(max(0.0, v) for v in value.per_day), self.iteration)
        self.columns[node].append(col)
        self._column_keys[node][key] = col
        return True

    def seed_columns(self) -> None:
        """Seed each node with the all-build outcome, and no-build when it is admissible."""
        for n in self.tree.ids:
            for fill in (0, 1):
                z = np.full(self.k, fill)
                if fill == 0 and not all(c.satisfied(z, 0.0) for c in self._reserve_cuts(n)):
                    continue
                self.add_column(n, z, self.evaluator.exact(n, z))

    # -- pricing -----------------------------------------------------------
    def smp_bounds(self, node: int, x_ub: Mapping[int, np.ndarray] | None):
        if not x_ub:
            return None
        ub = np.zeros(self.k)
        for m in self.tree.path(node):
            ub = np.maximum(ub, x_ub.get(m, np.ones(self.k)))
        return ub

    def price_node(self, node: int, psi: np.ndarray, psi0: float, z_ub=None) -> PricingResult:
        """Integer L-shaped loop on the secondary master of ``node``."""
        cfg = self.config
        pool = self.pools[node]
        n_theta = self._n_theta(node)
        seen: set[tuple] = set()
        cuts_added = 0
        repeated = False
        extra = self._reserve_cuts(node)
        for inner in range(1, cfg.max_inner + 1):
            smp = build_smp(self.k, psi, psi0, [*extra, *pool], n_theta=n_theta, z_ub=z_ub)
            res = solve_milp(smp.model, gap=0.0, backend=cfg.backend)
            if res.status == INFEASIBLE:
                return PricingResult(node, np.inf, None, None, cuts_added, inner)
            if not res.has_incumbent:
                raise SolverError(f"node {node}: secondary master returned {res.status}")
            z_hat = np.round(res.x[smp.z]).astype(int)
            theta = res.x[smp.theta]
            key = (tuple(z_hat), tuple(np.round(theta, 6)))
            if key in seen:
                repeated = True
                log.warning("node %d: repeated (theta, z) pair in inner loop", node)
                break
            seen.add(key)
            if self.out_of_time():
                break
            lpv = self.evaluator.lp(node, z_hat)
            new = self._lp_cuts(node, z_hat, theta, lpv)
            if new:
                cuts_added += sum(pool.add(c) for c in new)
                continue
            ex = self.evaluator.exact(node, z_hat)
            new = self._integer_cuts(node, z_hat, theta, ex)
            if new:
                cuts_added += sum(pool.add(c) for c in new)
                continue
            obj = float(res.bound if np.isfinite(res.bound) else res.objective)
            col = None
            if res.objective < -RC_TOL:
                col = Column(node, tuple(int(v) for v in z_hat), ex.per_day, self.iteration)
            return PricingResult(node, min(obj, res.objective), col, tuple(z_hat), cuts_added, inner, repeated)
        # inner loop interrupted: the last master value is still a valid bound
        return PricingResult(node, float(res.bound), None, None, cuts_added, cfg.max_inner, repeated)

    def _reserve_cuts(self, node: int) -> list[Cut]:
        if not self.config.reserve_in_pricing or self.credit.size == 0:
            return []
        need = self._needs[node]
        out = []
        for r in range(len(need)):
            if need[r] > 0 and self.credit[r].sum() >= need[r]:
                out.append(Cut(node, "reserve", self.credit[r], 0.0, float(need[r])))
        return out

    def _lp_cuts(self, node, z_hat, theta, lpv: NodeValue) -> list[Cut]:
        it = self.iteration
        if not lpv.feasible:
            return [make_benders_feasibility_cut(inf.certificate, inf.problem.model, inf.problem.rhs0,
                                                 inf.problem.Cz, node=node, iteration=it)
                    for inf in lpv.infeasible]
        if self.config.multicut:
            out = []
            for p, (v, g) in enumerate(zip(lpv.scenario_values, lpv.scenario_gradients)):
                if theta[p] < v - theta_tol(v):
                    out.append(aggregate_gradient_cut(v, g, z_hat, node=node, iteration=it, theta_index=p))
            return out
        if theta.sum() < lpv.value - theta_tol(lpv.value):
            return [aggregate_gradient_cut(lpv.value, lpv.gradient, z_hat, node=node, iteration=it)]
        return []

    def _integer_cuts(self, node, z_hat, theta, ex: NodeValue) -> list[Cut]:
        it = self.iteration
        if not ex.feasible:
            return [make_integer_feasibility_cut(z_hat, node=node, iteration=it)]
        if self.config.multicut:
            terms = [(p, v, b) for p, (v, b) in enumerate(zip(ex.scenario_values, ex.scenario_bounds))]
        else:
            terms = [(None, ex.value, ex.bound)]
        out = []
        for p, v, b in terms:
            t = theta.sum() if p is None else theta[p]
            if t < v - theta_tol(v):
                out.append(make_integer_optimality_cut(z_hat, v, node=node, iteration=it, theta_index=p))
                if self.config.monotone_cuts and b > 0:
                    out.append(make_monotone_cut(z_hat, b, node=node, iteration=it, theta_index=p))
        return out

    # -- incumbent ---------------------------------------------------------
    def evaluate_plan(self, builds: Mapping[int, np.ndarray]) -> tuple[float, dict[int, NodeValue]]:
        """True objective of a plan: capital cost plus exact expected operating cost."""
        plan = ExpansionPlan({n: np.round(np.asarray(b, float)) for n, b in builds.items()}, self.assets)
        cov = plan.coverage(self.tree)
        detail = dict(zip(self.tree.ids, self.pool.map_nodes(lambda n: self.evaluator.exact(n, cov[n]),
                                                              self.tree.ids)))
        if any(not v.feasible for v in detail.values()):
            return np.inf, detail
        cap = sum(self.tree.node(n).probability * float(self.params[n].capital_cost @ plan.builds[n])
                  for n in self.tree.ids)
        return cap + sum(v.value for v in detail.values()), detail

    def offer_plan(self, builds: Mapping[int, np.ndarray]) -> None:
        value, detail = self.evaluate_plan(builds)
        if value < self.best_ub - 1e-9 * max(1.0, abs(value)):
            self.best_ub = value
            self.best_plan = ExpansionPlan({n: np.round(np.asarray(b, float)) for n, b in builds.items()},
                                           self.assets)
            self.best_detail = detail

    def plan_from_coverage(self, cover: Mapping[int, np.ndarray]) -> dict[int, np.ndarray]:
        """Builds that realise at least ``cover`` at every node, keeping coverage monotone along paths."""
        full, builds = {}, {}
        for n in self.tree.ids:  # parents come first
            inherited = full.get(self.tree.node(n).parent, np.zeros(self.k, bool))
            full[n] = inherited | (np.asarray(cover.get(n, np.zeros(self.k)), float) > 0.5)
            builds[n] = (full[n] & ~inherited).astype(float)
        return builds

    def rounding_heuristic(self, mp: MasterProblem, sol: np.ndarray, results: Sequence[PricingResult]) -> None:
        """Offer the rounded-up master coverage and the priced coverages as incumbents."""
        frac = ExpansionPlan(mp.builds(sol), self.assets).coverage(self.tree)
        candidates = [{n: (c > INT_TOL).astype(float) for n, c in frac.items()}]
        priced = {r.node: np.asarray(r.z, float) for r in results if r.z is not None}
        if len(priced) == len(self.tree.ids):
            candidates.append(priced)
        for cover in candidates:
            builds = self.plan_from_coverage(cover)
            key = tuple(tuple(builds[n].astype(int)) for n in self.tree.ids)
            if key not in self._offered:
                self._offered.add(key)
                self.offer_plan(builds)

    def integer_master(self) -> None:
        mp = build_rpmp_lr(self.system, self.tree, self.params, self.columns, integer=True)
        res = solve_milp(mp.model, gap=1e-9, backend=self.config.backend)
        if res.has_incumbent:
            self.offer_plan(mp.builds(res.x))

    # -- outer loop --------------------------------------------------------
    def master(self, x_lb=None, x_ub=None) -> MasterProblem:
        return build_rpmp_lr(self.system, self.tree, self.params, self.columns, x_lb=x_lb, x_ub=x_ub)

    def record(self, lb_global: float, columns_added: int, cuts_added: int) -> TraceRow:
        self.lb_record = max(self.lb_record, min(lb_global, self.best_ub))
        row = TraceRow(self.iteration, self.lb_record, self.best_ub, relative_gap(self.lb_record, self.best_ub),
                       self.elapsed(), self.evaluator.subproblem_solves, columns_added, cuts_added)
        self.trace.append(row)
        if self.progress is not None:
            self.progress(row)
        return row

    def column_generation(self, x_lb, x_ub, open_bound: Callable[[float], float]):
        """Run pricing rounds on one branch node until no column prices out.

        Returns (status, node bound, last master solution, master).
        """
        cfg = self.config
        bound = -np.inf
        while True:
            if self.iteration >= cfg.max_outer:
                return ITERATION_LIMIT, bound, None, None
            self.iteration += 1
            if not cfg.warm_start:
                for p in self.pools.values():
                    p.clear()
                self.evaluator.clear_cache()
            mp = self.master(x_lb, x_ub)
            if cfg.dump_models:
                Path(cfg.dump_models).mkdir(parents=True, exist_ok=True)
                write_lp(mp.model, Path(cfg.dump_models) / f"rpmp_iter{self.iteration}.lp")
            res = solve_lp(mp.model, cfg.backend)
            if not res.optimal:
                return INFEASIBLE_PLAN, np.inf, None, mp
            duals = res.duals

            def price(n):
                return self.price_node(n, mp.psi(duals, n), mp.psi0(duals, n), self.smp_bounds(n, x_ub))

            results = self.pool.map_nodes(price, self.tree.ids)
            self.repeated_pairs += sum(r.repeated_pair for r in results)
            lb_here, _ = compute_bounds(res.objective, [r.objective for r in results], self.best_ub)
            bound = max(bound, lb_here)
            added = 0
            for r in results:
                if r.column is not None:
                    added += self.add_column(r.node, r.column.z, self.evaluator.exact(r.node, r.column.z))
            cuts = sum(r.cuts_added for r in results)
            self.integer_master()
            if cfg.heuristics:
                self.rounding_heuristic(mp, res.x, results)
            row = self.record(open_bound(bound), added, cuts)
            log.info("iter %d lb %.6g ub %.6g gap %.4g", row.iteration, row.lb, row.ub, row.gap)
            if row.gap <= cfg.gap:
                return CONVERGED, bound, res.x, mp
            if self.out_of_time():
                return TIME_LIMIT, bound, res.x, mp
            if added == 0:
                # column generation converged: the master LP value is the node bound
                return NO_COLUMNS, max(bound, res.objective), res.x, mp

    def solve(self) -> SolveResult:
        """Depth-first branch and price; most runs finish at the root."""
        cfg = self.config
        self.seed_columns()
        stack = [({}, {}, -np.inf)]  # (x lower bounds, x upper bounds, parent bound) per branch node
        closed: list[float] = []  # bounds of fathomed branch nodes
        status = CONVERGED
        while stack:
            x_lb, x_ub, parent = stack.pop()
            if parent >= self.best_ub - cfg.gap * abs(self.best_ub):
                closed.append(parent)
                continue
            pending = [b for *_, b in stack] + closed

            def open_bound(b, pending=pending, parent=parent):
                return min([max(b, parent), *pending])

            st, bound, sol, mp = self.column_generation(x_lb, x_ub, open_bound)
            bound = max(bound, parent)
            if st in (CONVERGED, TIME_LIMIT, ITERATION_LIMIT):
                if sol is not None and branch_if_fractional(mp, sol) is not None:
                    self.master_integral = False
                status = st
                break
            if st == INFEASIBLE_PLAN or mp.artificial_level(sol) > INT_TOL:
                closed.append(np.inf)  # no feasible plan under these branching decisions
                continue
            pick = branch_if_fractional(mp, sol)
            if pick is None:
                self.offer_plan(mp.builds(sol))
                closed.append(bound)
                continue
            self.master_integral = False
            if bound >= self.best_ub - cfg.gap * abs(self.best_ub):
                closed.append(bound)
                continue
            if not cfg.branching:
                status = "fractional"
                break
            self.branched = True
            n, a = pick
            for val in (0.0, 1.0):  # the x = 1 child is explored first
                lb_c = {m: v.copy() for m, v in x_lb.items()}
                ub_c = {m: v.copy() for m, v in x_ub.items()}
                lb_c.setdefault(n, np.zeros(self.k))[a] = val
                ub_c.setdefault(n, np.ones(self.k))[a] = val
                stack.append((lb_c, ub_c, bound))
        else:
            # search tree exhausted: every branch node is fathomed within the gap
            self.record(min(closed, default=self.best_ub), 0, 0)
        if self.best_plan is None and status == CONVERGED:
            status = INFEASIBLE_PLAN
        return self._result(status)

    def _result(self, status: str) -> SolveResult:
        plan = self.best_plan
        cap = np.nan
        op = {}
        if plan is not None:
            cap = sum(self.tree.node(n).probability * float(self.params[n].capital_cost @ plan.builds[n])
                      for n in self.tree.ids)
            op = {n: v.per_day for n, v in self.best_detail.items()}
        row = self.trace.last
        return SolveResult("ncd", status, plan, self.best_ub, row.lb if row else -np.inf, self.trace, cap, op,
                           self.evaluator.subproblem_solves, self.iteration, self.branched, self.master_integral,
                           {n: list(c) for n, c in self.columns.items()}, self.pools, self.repeated_pairs,
                           self.elapsed(),
                           {"lp_solves": self.evaluator.counter.lp, "milp_solves": self.evaluator.counter.milp,
                            "cuts": {n: len(p) for n, p in self.pools.items()}})


def solve_ncd(system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, config: RunConfig, *,
              progress: Callable[[TraceRow], None] | None = None, **kw) -> SolveResult:
    """Plan capacity expansion with nested cross decomposition."""
    threads = effective_threads(config.threads)
    with WorkerPool(threads) as pool:
        return NCDSolver(system, tree, scenarios, config, progress=progress, pool=pool, **kw).solve()


def branch_if_fractional(mp: MasterProblem, solution: np.ndarray) -> tuple[int, int] | None:
    """Most fractional build variable ``(node, asset)`` of a master solution, or ``None`` if integral."""
    xs = mp.builds(solution)
    best, pick = INT_TOL, None
    for n in sorted(xs):
        f = np.abs(xs[n] - np.round(xs[n]))
        a = int(np.argmax(f)) if f.size else 0
        if f.size and f[a] > best:
            best, pick = f[a], (n, a)
    return pick
