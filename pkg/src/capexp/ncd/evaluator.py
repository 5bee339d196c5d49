"""Recourse evaluation Q_n(z): all operating-day subproblems of one tree node."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..formulations import DEFAULT_SEGMENTS, UCProblem, build_uc
from ..grid import PowerSystem
from ..scenario import ScenarioSet, ScenarioTree
from ..solver import INFEASIBLE, InfeasibilityCertificate, infeasibility_certificate, solve_lp, solve_milp, write_lp
from ..solver.model import DEFAULT_MIP_GAP, SolverError
from .parallel import WorkerPool


@dataclass(frozen=True, eq=False)
class Infeasibility:
    """An infeasible subproblem; LP relaxations carry a Farkas certificate."""

    problem: UCProblem
    certificate: InfeasibilityCertificate | None = None


@dataclass(frozen=True, eq=False)
class NodeValue:
    """Weighted recourse value of one node at one coverage vector.

    ``value`` and ``gradient`` are already multiplied by the node weight and
    the per-scenario weights; ``per_day`` holds unweighted scenario means.
    ``scenario_values`` / ``scenario_gradients`` are the weighted per-scenario
    terms in (day, scenario) order and sum to ``value`` / ``gradient``.
    """

    node: int
    z: tuple[int, ...]
    value: float
    per_day: tuple[float, ...]
    scenario_values: np.ndarray
    gradient: np.ndarray | None = None
    scenario_gradients: np.ndarray | None = None
    infeasible: tuple[Infeasibility, ...] = ()
    exact: bool = False
    scenario_bounds: np.ndarray | None = None  # weighted MILP dual bounds, exact evaluations only

    @property
    def bound(self) -> float:
        """Proven lower bound on ``value`` (equal to it for LP evaluations)."""
        return self.value if self.scenario_bounds is None else float(self.scenario_bounds.sum())

    @property
    def feasible(self) -> bool:
        return not self.infeasible


@dataclass
class SolveCounter:
    lp: int = 0
    milp: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, lp: int = 0, milp: int = 0) -> None:
        with self._lock:
            self.lp += lp
            self.milp += milp

    @property
    def total(self) -> int:
        return self.lp + self.milp


class ScenarioEvaluator:
    """Builds, caches and solves the UC subproblems of every (node, day, scenario).

    Base models are built once per scenario at ``z = 0`` and re-targeted by
    right-hand side only. Results are cached by ``(node, z)``; the cache can
    be cleared to emulate a cold start.
    """

    def __init__(self, system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, *,
                 segments: int = DEFAULT_SEGMENTS, mip_gap: float = DEFAULT_MIP_GAP, backend: str | None = None,
                 pool: WorkerPool | None = None, dump_dir: str | Path | None = None):
        self.system = system
        self.tree = tree
        self.scenarios = scenarios
        self.segments = segments
        self.mip_gap = mip_gap
        self.backend = backend
        self.pool = pool or WorkerPool(1)
        self.dump_dir = Path(dump_dir) if dump_dir else None
        self.counter = SolveCounter()
        self._base: dict[int, list[tuple[str, float, UCProblem]]] = {}
        self._lp_cache: dict[tuple[int, tuple[int, ...]], NodeValue] = {}
        self._exact_cache: dict[tuple[int, tuple[int, ...]], NodeValue] = {}
        self._lock = threading.Lock()
        self.history: list[NodeValue] = []  # every exact evaluation, in completion order per node

    @property
    def n_assets(self) -> int:
        return self.system.n_candidates

    @property
    def subproblem_solves(self) -> int:
        return self.counter.total

    def days(self, node: int) -> tuple[str, ...]:
        return self.tree.days

    def num_scenarios(self, node: int) -> int:
        return len(self._problems(node))

    def day_of_scenario(self, node: int) -> np.ndarray:
        """Representative-day index of each subproblem, in evaluation order."""
        return np.array([self.tree.days.index(d) for d, _, _ in self._problems(node)], dtype=int)

    def _problems(self, node: int) -> list[tuple[str, float, UCProblem]]:
        with self._lock:
            probs = self._base.get(node)
        if probs is not None:
            return probs
        probs = []
        for day in self.tree.days:
            for sc in self.scenarios.get(node, day):
                uc = build_uc(self.system, None, sc, segments=self.segments)
                probs.append((day, sc.weight, uc))
                if self.dump_dir is not None and sc.id == 0:
                    self.dump_dir.mkdir(parents=True, exist_ok=True)
                    write_lp(uc.model, self.dump_dir / f"uc_node{node}_{day}.lp")
        with self._lock:
            self._base.setdefault(node, probs)
            return self._base[node]

    def clear_cache(self) -> None:
        with self._lock:
            self._lp_cache.clear()
            self._exact_cache.clear()

    def _assemble(self, node, zkey, values, grads, infeasible, exact, bounds=None) -> NodeValue:
        probs = self._problems(node)
        w = self.tree.weight(node)
        per_day = []
        for d in self.tree.days:
            vs = [v * wt for (dd, wt, _), v in zip(probs, values) if dd == d]
            per_day.append(float(sum(vs)) if vs else 0.0)
        scale = np.array([w * wt for _, wt, _ in probs], dtype=float)
        sv = scale * np.asarray(values, dtype=float)
        sg = g = sb = None
        if grads is not None:
            sg = (scale[:, None] * np.asarray(grads, dtype=float)).reshape(len(probs), self.n_assets)
            g = sg.sum(axis=0)
        if bounds is not None:
            sb = scale * np.asarray(bounds, dtype=float)
        return NodeValue(node, zkey, float(sv.sum()), tuple(per_day), sv, g, sg, tuple(infeasible), exact, sb)

    def lp(self, node: int, z) -> NodeValue:
        """LP relaxation values and subgradients of every subproblem at ``z``."""
        zkey = tuple(int(round(v)) for v in np.asarray(z).ravel())
        with self._lock:
            hit = self._lp_cache.get((node, zkey))
        if hit is not None:
            return hit
        probs = self._problems(node)
        zf = np.array(zkey, float)

        def one(item):
            uc = item[2].at(zf)
            res = solve_lp(uc.model, self.backend)
            if res.status == INFEASIBLE:
                return None, None, Infeasibility(uc, infeasibility_certificate(uc.model, self.backend))
            if not res.optimal:
                raise SolverError(f"node {node}: subproblem LP returned {res.status}")
            return res.objective, np.asarray(uc.Cz.T @ res.duals).ravel(), None

        out = self.pool.map_scenarios(one, probs)
        self.counter.add(lp=len(probs))
        infeasible = [o[2] for o in out if o[2] is not None]
        values = [o[0] if o[0] is not None else np.inf for o in out]
        grads = [o[1] if o[1] is not None else np.zeros(self.n_assets) for o in out]
        nv = self._assemble(node, zkey, values, grads, infeasible, exact=False)
        with self._lock:
            self._lp_cache.setdefault((node, zkey), nv)
        return nv

    def exact(self, node: int, z) -> NodeValue:
        """MILP values of every subproblem at binary ``z``."""
        zkey = tuple(int(round(v)) for v in np.asarray(z).ravel())
        with self._lock:
            hit = self._exact_cache.get((node, zkey))
        if hit is not None:
            return hit
        probs = self._problems(node)
        zf = np.array(zkey, float)

        def one(item):
            uc = item[2].at(zf)
            res = solve_milp(uc.model, self.mip_gap, None, self.backend)
            if res.status == INFEASIBLE:
                return None
            if not res.has_incumbent:
                raise SolverError(f"node {node}: subproblem MILP returned {res.status}")
            bound = res.bound if np.isfinite(res.bound) else -np.inf
            return res.objective, min(bound, res.objective)

        out = self.pool.map_scenarios(one, probs)
        self.counter.add(milp=len(probs))
        infeasible = [Infeasibility(p[2].at(zf)) for p, o in zip(probs, out) if o is None]
        values = [np.inf if o is None else o[0] for o in out]
        bounds = [np.inf if o is None else o[1] for o in out]
        nv = self._assemble(node, zkey, values, None, infeasible, exact=True, bounds=bounds)
        with self._lock:
            if (node, zkey) not in self._exact_cache:
                self._exact_cache[(node, zkey)] = nv
                self.history.append(nv)
            return self._exact_cache[(node, zkey)]

    def operating_cost(self, coverage: dict[int, np.ndarray]) -> dict[int, NodeValue]:
        """Exact recourse of a full plan, keyed by node."""
        return {n: self.exact(n, coverage[n]) for n in self.tree.ids}
