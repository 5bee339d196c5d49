"""Result types, backend registry and the generic solve entry points."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .model import EQ, GE, LE, ContractError, DEFAULT_MIP_GAP, FEAS_TOL, LinearModel, ModelBuilder

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time_limit"  # MILP stopped early with an incumbent
NO_INCUMBENT = "no_incumbent"  # MILP stopped early without one


@dataclass(frozen=True, eq=False)
class LPResult:
    """Row duals follow d(objective)/d(rhs); reduced costs are ``c - A.T @ duals``."""

    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True, eq=False)
class MILPResult:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    bound: float = -np.inf
    nodes: int = 0

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    @property
    def gap(self) -> float:
        if self.x is None:
            return np.inf
        return abs(self.objective - self.bound) / max(1.0, abs(self.objective))


@dataclass(frozen=True, eq=False)
class InfeasibilityCertificate:
    """Farkas multipliers on the rows written in ``>=`` orientation.

    ``ray[i]`` multiplies row ``i`` after ``<=`` rows are negated; it is
    nonnegative on inequality rows and free on equalities. The aggregated
    row ``g = ray @ A_normalized`` cannot reach ``ray @ rhs_normalized`` on
    the variable box, which proves infeasibility.
    """

    ray: np.ndarray

    def aggregate(self, model: LinearModel) -> tuple[np.ndarray, float]:
        sign = np.where(model.sense == LE, -1.0, 1.0)
        y = self.ray * sign
        return model.A.T @ y, float(y @ model.rhs)

    def margin(self, model: LinearModel) -> float:
        """``ray @ b - max_{lb<=x<=ub} g @ x``; positive for a valid certificate."""
        g, b = self.aggregate(model)
        return b - box_max(g, model.lb, model.ub)

    def is_valid(self, model: LinearModel, tol: float = 1e-9) -> bool:
        ineq = model.sense != EQ
        if np.any(self.ray[ineq] < -tol):
            return False
        return self.margin(model) > tol


def box_max(g: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> float:
    """max of ``g @ x`` over the box, with ``0 * inf`` treated as 0."""
    tiny = 1e-12
    hi = np.where(g > tiny, ub, np.where(g < -tiny, lb, 0.0))
    with np.errstate(invalid="ignore"):
        terms = np.where(np.abs(g) > tiny, g * hi, 0.0)
    return float(terms.sum())


class Backend(Protocol):
    name: str

    def solve_lp(self, model: LinearModel) -> LPResult: ...

    def solve_milp(self, model: LinearModel, gap: float, time_limit: float | None) -> MILPResult: ...


_REGISTRY: dict[str, Callable[[], Backend]] = {}


def register_backend(name: str, factory: Callable[[], Backend]) -> None:
    _REGISTRY[name] = factory


def available_backends() -> list[str]:
    return list(_REGISTRY)


def default_backend_name() -> str:
    env = os.environ.get("CAPEXP_BACKEND")
    if env:
        return env
    return "highs" if "highs" in _REGISTRY else "builtin"


def get_backend(name: str | None = None) -> Backend:
    key = name or default_backend_name()
    try:
        return _REGISTRY[key]()
    except KeyError:
        raise ValueError(f"unknown solver backend {key!r}; available: {available_backends()}") from None


def solve_lp(model: LinearModel, backend: str | None = None) -> LPResult:
    """Solve the continuous relaxation of ``model``."""
    if model.num_vars == 0:
        feasible = _empty_feasible(model)
        if not feasible:
            return LPResult(INFEASIBLE)
        return LPResult(OPTIMAL, np.zeros(0), model.offset, np.zeros(model.num_rows), np.zeros(0))
    return get_backend(backend).solve_lp(model.relaxed() if model.is_mip else model)


def solve_milp(model: LinearModel, gap: float = DEFAULT_MIP_GAP, time_limit: float | None = None,
               backend: str | None = None) -> MILPResult:
    """Solve ``model`` with its integrality restrictions.

    ``bound`` is a valid lower bound; on ``time_limit`` the incumbent is the
    best found. Pure LPs are routed to the LP path.
    """
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    if not model.is_mip:
        res = solve_lp(model, backend)
        if res.optimal:
            return MILPResult(OPTIMAL, res.x, res.objective, res.objective)
        return MILPResult(res.status)
    return get_backend(backend).solve_milp(model, gap, time_limit)


def _empty_feasible(model: LinearModel) -> bool:
    r = model.rhs
    return bool(np.all(np.where(model.sense == LE, r >= -FEAS_TOL,
                                np.where(model.sense == GE, r <= FEAS_TOL, np.abs(r) <= FEAS_TOL))))


def phase_one(model: LinearModel) -> tuple[LinearModel, int]:
    """Elastic model ``min sum(e)`` whose rows are the ``>=``-normalized originals.

    Returns the model and the number of original variables (the first columns).
    """
    sign = np.where(model.sense == LE, -1.0, 1.0)
    m, n = model.num_rows, model.num_vars
    b = ModelBuilder()
    x = b.add_vars(n, lb=model.lb, ub=model.ub, name="x")
    e = b.add_vars(m, lb=0.0, cost=1.0, name="e")
    A = model.A.tocoo()
    eq = np.flatnonzero(model.sense == EQ)
    em = b.add_vars(len(eq), lb=0.0, cost=1.0, name="e_minus")
    rows = np.concatenate([A.row, np.arange(m), eq])
    cols = np.concatenate([x.ravel()[A.col], e, em])
    vals = np.concatenate([A.data * sign[A.row], np.ones(m), -np.ones(len(eq))])
    senses = np.where(model.sense == EQ, EQ, GE)
    b.add_rows(m, rows, cols, vals, senses, model.rhs * sign, name="rows")
    return b.build(), n


def infeasibility_certificate(model: LinearModel, backend: str | None = None) -> InfeasibilityCertificate:
    """Farkas certificate for an infeasible LP (integrality ignored).

    Raises :class:`ContractError` when the relaxation is feasible.
    """
    if model.num_vars == 0:
        if _empty_feasible(model):
            raise ContractError("model is feasible; no infeasibility certificate exists")
        sign = np.where(model.sense == LE, -1.0, 1.0)
        norm = model.rhs * sign
        ray = np.where(model.sense == EQ, np.sign(norm), np.maximum(np.sign(norm), 0.0))
        return InfeasibilityCertificate(ray)
    p1, _ = phase_one(model.relaxed())
    res = solve_lp(p1, backend)
    if not res.optimal:
        raise ContractError(f"phase-one problem returned {res.status}")
    if res.objective <= FEAS_TOL:
        raise ContractError("model is feasible; no infeasibility certificate exists")
    ray = np.asarray(res.duals, float).copy()
    ineq = model.sense != EQ
    ray[ineq] = np.maximum(ray[ineq], 0.0)
    cert = InfeasibilityCertificate(ray)
    if cert.margin(model) <= 0:
        raise ContractError("backend duals do not certify infeasibility")
    return cert
