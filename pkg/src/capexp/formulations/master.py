"""Restricted master (column pool LP/MIP) and the per-node secondary master."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..grid import PowerSystem
from ..scenario import NodeParameters, ScenarioTree
from ..solver import LinearModel, ModelBuilder
from .tic import reserve_rows


@dataclass(frozen=True)
class Column:
    """A capacity outcome for one node with its expected daily operating costs."""

    node: int
    z: tuple[int, ...]
    toc: tuple[float, ...]  # expected operating cost per representative day
    iteration: int = 0

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.z):
            raise ValueError("column coverage must be binary")
        if any(t < -1e-6 for t in self.toc):
            raise ValueError("operating cost must be nonnegative")

    @property
    def cost(self) -> float:
        return float(sum(self.toc))


@dataclass(frozen=True, eq=False)
class MasterProblem:
    model: LinearModel
    x: dict[int, np.ndarray]
    lam: dict[int, np.ndarray]
    art: np.ndarray
    columns: dict[int, tuple[Column, ...]]
    link_rows: dict[int, np.ndarray]
    conv_rows: dict[int, int]
    big_m: float

    def psi(self, duals: np.ndarray, n: int) -> np.ndarray:
        """Linking-row duals of node ``n`` (nonpositive: d obj / d rhs of a ``<=`` row)."""
        return np.asarray(duals)[self.link_rows[n]]

    def psi0(self, duals: np.ndarray, n: int) -> float:
        return float(np.asarray(duals)[self.conv_rows[n]])

    def builds(self, sol: np.ndarray) -> dict[int, np.ndarray]:
        return {n: np.asarray(sol)[idx] for n, idx in self.x.items()}

    def weights(self, sol: np.ndarray) -> dict[int, np.ndarray]:
        return {n: np.asarray(sol)[idx] for n, idx in self.lam.items()}

    def artificial_level(self, sol: np.ndarray) -> float:
        return float(np.asarray(sol)[self.art].sum()) if self.art.size else 0.0


def big_m_for(params: Mapping[int, NodeParameters]) -> float:
    return 10.0 * max(float(p.capital_cost.sum()) for p in params.values())


def build_rpmp_lr(system: PowerSystem, tree: ScenarioTree, params: Mapping[int, NodeParameters],
                  columns: Mapping[int, Sequence[Column]], *, integer: bool = False,
                  x_lb: Mapping[int, np.ndarray] | None = None, x_ub: Mapping[int, np.ndarray] | None = None,
                  big_m: float | None = None) -> MasterProblem:
    """Column-pool master over build decisions ``x`` and column weights ``lambda``.

    With ``integer=False`` this is the LP relaxation with big-M artificial
    slacks on the reserve rows. With ``integer=True`` the builds and column
    choices are binary and the artificials are fixed to zero, giving a
    feasible plan whenever one exists within the pool.
    """
    nodes = tree.ids
    k = system.n_candidates
    for n in nodes:
        if not columns.get(n):
            raise ValueError(f"node {n} has no columns")
    M = big_m_for(params) if big_m is None else big_m
    b = ModelBuilder()
    x, lam = {}, {}
    for n in nodes:
        lo = np.zeros(k) if x_lb is None or n not in x_lb else x_lb[n]
        hi = np.ones(k) if x_ub is None or n not in x_ub else x_ub[n]
        x[n] = b.add_vars(k, lb=lo, ub=hi, cost=tree.node(n).probability * params[n].capital_cost,
                          integer=integer, name=f"x{n}")
    for n in nodes:
        cols = columns[n]
        lam[n] = b.add_vars(len(cols), ub=1.0, cost=[tree.weight(n) * c.cost for c in cols],
                            integer=integer, name=f"lambda{n}")
    credit, _ = reserve_rows(system, {})
    needs = {n: reserve_rows(system, params[n].peak_by_region)[1] for n in nodes}
    short = [(n, r) for n in nodes for r in range(len(system.regions)) if needs[n][r] > 0]
    art = b.add_vars(len(short), ub=0.0 if integer else 1.0, cost=M, name="artificial")

    link_rows, conv_rows = {}, {}
    for n in nodes:
        path = tree.path(n)
        Z = np.array([c.z for c in columns[n]], dtype=float).reshape(len(columns[n]), k)
        rr, cc = np.nonzero(Z.T)
        rows = np.r_[rr, np.tile(np.arange(k), len(path))]
        cols = np.r_[lam[n][cc], np.concatenate([x[m] for m in path])]
        vals = np.r_[np.ones(len(rr)), -np.ones(k * len(path))]
        link_rows[n] = b.add_rows(k, rows, cols, vals, "<=", 0.0, name=f"link{n}")
        conv_rows[n] = b.add_row(lam[n], 1.0, "=", 1.0, name=f"convexity{n}")
        if len(path) > 1:
            b.add_rows(k, np.tile(np.arange(k), len(path)), np.concatenate([x[m] for m in path]), 1.0, "<=", 1.0,
                       name=f"split{n}")
    for a_i, (n, r) in enumerate(short):
        path = tree.path(n)
        nz = np.flatnonzero(credit[r])
        cols = np.r_[np.concatenate([x[m][nz] for m in path]), art[a_i]]
        vals = np.r_[np.tile(credit[r][nz], len(path)), needs[n][r]]
        b.add_row(cols, vals, ">=", needs[n][r], name=f"reserve{n}")
    return MasterProblem(b.build(), x, lam, art, {n: tuple(columns[n]) for n in nodes}, link_rows, conv_rows, M)


@dataclass(frozen=True, eq=False)
class SecondaryMaster:
    model: LinearModel
    z: np.ndarray
    theta: np.ndarray


def build_smp(n_assets: int, psi, psi0: float, cuts: Sequence = (), *, n_theta: int = 1,
              z_lb=None, z_ub=None) -> SecondaryMaster:
    """Pricing master ``min -psi @ z - psi0 + sum(theta)`` over binary ``z``.

    Each cut has ``rho`` (over z), ``nu``, ``rhs`` and ``theta_index``
    (``None`` puts ``nu`` on every theta component) and reads
    ``rho @ z + nu * theta >= rhs``. ``theta >= 0`` because operating
    costs are nonnegative.
    """
    psi = np.asarray(psi, float)
    if psi.shape != (n_assets,):
        raise ValueError("psi has the wrong length")
    b = ModelBuilder()
    z = b.add_vars(n_assets, lb=0.0 if z_lb is None else z_lb, ub=1.0 if z_ub is None else z_ub,
                   cost=-psi, integer=True, name="z")
    theta = b.add_vars(n_theta, cost=1.0, name="theta")
    b.offset = -float(psi0)
    for cut in cuts:
        rho = np.asarray(cut.rho, float)
        nzr = np.flatnonzero(rho)
        if getattr(cut, "theta_index", None) is None:
            tcols, tvals = theta, np.full(n_theta, cut.nu)
        else:
            tcols, tvals = theta[[cut.theta_index]], np.array([cut.nu])
        if cut.nu == 0:
            tcols, tvals = theta[:0], np.zeros(0)
        b.add_row(np.r_[z[nzr], tcols], np.r_[rho[nzr], tvals], ">=", cut.rhs, name="cut")
    return SecondaryMaster(b.build(), z, theta)
