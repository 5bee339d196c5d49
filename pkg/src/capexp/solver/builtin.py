"""Dependency-free fallback: dense two-phase simplex (Bland's rule) and best-first branch and bound.

Intended for small models only; see :attr:`BuiltinBackend.max_vars`.
"""
from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from .base import INFEASIBLE, NO_INCUMBENT, OPTIMAL, TIME_LIMIT, UNBOUNDED, LPResult, MILPResult
from .model import EQ, GE, INT_TOL, LE, LinearModel, SolverError

PIVOT_TOL = 1e-9
COST_TOL = 1e-9


class _StandardForm:
    """``min c y  s.t.  A y = b, y >= 0`` with ``x = x0 + T y`` and row flips recorded."""

    def __init__(self, model: LinearModel, lb: np.ndarray, ub: np.ndarray):
        n = model.num_vars
        cols_T = []  # (orig var, std col, coeff)
        x0 = np.zeros(n)
        bound_rows = []  # (std col, rhs)
        ny = 0
        for j in range(n):
            lo, hi = lb[j], ub[j]
            if np.isfinite(lo):
                x0[j] = lo
                cols_T.append((j, ny, 1.0))
                if np.isfinite(hi):
                    bound_rows.append((ny, hi - lo))
                ny += 1
            elif np.isfinite(hi):
                x0[j] = hi
                cols_T.append((j, ny, -1.0))
                ny += 1
            else:
                cols_T.append((j, ny, 1.0))
                cols_T.append((j, ny + 1, -1.0))
                ny += 2
        T = np.zeros((n, ny))
        for j, k, v in cols_T:
            T[j, k] = v
        A = model.A.toarray()
        m = model.num_rows
        AT = A @ T
        rhs = model.rhs - A @ x0
        n_slack = int(np.sum(model.sense != EQ)) + len(bound_rows)
        m_std = m + len(bound_rows)
        N = ny + n_slack
        S = np.zeros((m_std, N))
        S[:m, :ny] = AT
        b = np.zeros(m_std)
        b[:m] = rhs
        k = ny
        for i in range(m):
            if model.sense[i] == LE:
                S[i, k] = 1.0
                k += 1
            elif model.sense[i] == GE:
                S[i, k] = -1.0
                k += 1
        for r, (col, cap) in enumerate(bound_rows):
            S[m + r, col] = 1.0
            S[m + r, k] = 1.0
            b[m + r] = cap
            k += 1
        flip = np.where(b < 0, -1.0, 1.0)
        self.A = S * flip[:, None]
        self.b = b * flip
        self.flip = flip
        self.c = np.zeros(N)
        self.c[:ny] = model.c @ T
        self.T, self.x0, self.ny, self.m = T, x0, ny, m

    def to_original(self, y: np.ndarray) -> np.ndarray:
        return self.x0 + self.T @ y[: self.ny]


def _pivot(tab: np.ndarray, r: int, k: int) -> None:
    tab[r] /= tab[r, k]
    col = tab[:, k].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])


def _simplex(tab: np.ndarray, basis: list[int], cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
    """Bland's-rule primal simplex on a tableau whose last column is the rhs."""
    m = tab.shape[0]
    for _ in range(max_iter):
        cb = cost[basis]
        red = cost - cb @ tab[:, :-1]
        cand = np.flatnonzero((red < -COST_TOL) & allowed)
        if cand.size == 0:
            return OPTIMAL
        k = int(cand[0])
        col = tab[:, k]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return UNBOUNDED
        ratios = tab[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(tab, r, k)
        basis[r] = k
    raise SolverError("builtin simplex iteration limit reached")


def simplex_lp(model: LinearModel, lb=None, ub=None) -> LPResult:
    lb = model.lb if lb is None else lb
    ub = model.ub if ub is None else ub
    if np.any(lb > ub + 1e-12):
        return LPResult(INFEASIBLE)
    sf = _StandardForm(model, lb, ub)
    m, N = sf.A.shape
    tab = np.zeros((m, N + m + 1))
    tab[:, :N] = sf.A
    tab[:, N:N + m] = np.eye(m)
    tab[:, -1] = sf.b
    basis = list(range(N, N + m))
    max_iter = 50 * (N + m) + 1000

    phase1 = np.zeros(N + m)
    phase1[N:] = 1.0
    _simplex(tab, basis, phase1, np.ones(N + m, bool), max_iter)
    if tab[:, -1] @ phase1[basis] > 1e-7 * max(1.0, np.abs(sf.b).max(initial=0.0)):
        return LPResult(INFEASIBLE)

    # drive zero-level artificials out of the basis where possible
    keep = np.ones(m, bool)
    for r in range(m):
        if basis[r] >= N:
            nz = np.flatnonzero(np.abs(tab[r, :N]) > PIVOT_TOL)
            if nz.size:
                _pivot(tab, r, int(nz[0]))
                basis[r] = int(nz[0])
            else:
                keep[r] = False
    rows = np.flatnonzero(keep)
    tab2 = tab[rows]
    basis2 = [basis[r] for r in rows]
    cost = np.concatenate([sf.c, np.zeros(m)])
    allowed = np.zeros(N + m, bool)
    allowed[:N] = True
    status = _simplex(tab2, basis2, cost, allowed, max_iter)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED)
    y = np.zeros(N)
    for r, j in enumerate(basis2):
        if j < N:
            y[j] = tab2[r, -1]
    x = sf.to_original(y)
    cb = cost[basis2]
    ystd = cb @ tab2[:, N:N + m]  # c_B B^-1 through the artificial columns
    duals_std = ystd * sf.flip
    duals = duals_std[: sf.m]
    rc = model.c - model.A.T @ duals
    return LPResult(OPTIMAL, x, float(model.c @ x + model.offset), duals, np.asarray(rc))


class BuiltinBackend:
    name = "builtin"
    max_vars = 500

    def _check(self, model: LinearModel):
        if model.num_vars > self.max_vars:
            raise SolverError(f"builtin backend is limited to {self.max_vars} variables "
                              f"(model has {model.num_vars}); install highspy")

    def solve_lp(self, model: LinearModel) -> LPResult:
        self._check(model)
        return simplex_lp(model)

    def solve_milp(self, model: LinearModel, gap: float, time_limit: float | None) -> MILPResult:
        self._check(model)
        start = time.monotonic()
        ints = np.flatnonzero(model.integer)
        lb0 = model.lb.copy()
        ub0 = model.ub.copy()
        lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
        ub0[ints] = np.floor(ub0[ints] + INT_TOL)
        root = simplex_lp(model, lb0, ub0)
        if root.status == INFEASIBLE:
            return MILPResult(INFEASIBLE)
        if root.status == UNBOUNDED:
            return MILPResult(UNBOUNDED)
        counter = itertools.count()
        heap = [(root.objective, next(counter), lb0, ub0, root)]
        best_x, best_obj = None, np.inf
        nodes = 0
        while heap:
            bound = heap[0][0]
            if best_x is not None and best_obj - bound <= gap * max(1.0, abs(best_obj)) + 1e-9:
                return MILPResult(OPTIMAL, best_x, best_obj, min(bound, best_obj), nodes)
            if time_limit is not None and time.monotonic() - start > time_limit:
                status = TIME_LIMIT if best_x is not None else NO_INCUMBENT
                return MILPResult(status, best_x, best_obj if best_x is not None else np.nan, bound, nodes)
            obj, _, lb, ub, res = heapq.heappop(heap)
            nodes += 1
            if obj >= best_obj:
                continue
            xi = res.x[ints]
            frac = np.abs(xi - np.round(xi))
            if frac.max(initial=0.0) <= INT_TOL:
                x = res.x.copy()
                x[ints] = np.round(xi)
                best_x, best_obj = x, float(model.c @ x + model.offset)
                continue
            j = int(ints[np.argmax(frac)])  # most fractional
            v = res.x[j]
            for lo, hi in ((lb[j], np.floor(v)), (np.ceil(v), ub[j])):
                nlb, nub = lb.copy(), ub.copy()
                nlb[j], nub[j] = lo, hi
                child = simplex_lp(model, nlb, nub)
                if child.optimal and child.objective < best_obj:
                    heapq.heappush(heap, (child.objective, next(counter), nlb, nub, child))
        if best_x is None:
            return MILPResult(INFEASIBLE, nodes=nodes)
        return MILPResult(OPTIMAL, best_x, best_obj, best_obj, nodes)
