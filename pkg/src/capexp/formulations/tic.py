"""Investment (TIC) problem of a single scenario-tree node."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import PowerSystem
from ..scenario import NodeParameters
from ..solver import LinearModel, ModelBuilder


@dataclass(frozen=True, eq=False)
class TICNodeProblem:
    model: LinearModel
    x: np.ndarray  # build binaries, candidate-asset order
    kappa: np.ndarray  # cumulative MW after this node's builds
    params: NodeParameters

    @property
    def num_binaries(self) -> int:
        return int(self.model.integer.sum())


def reserve_rows(system: PowerSystem, peaks: dict[int, float]) -> tuple[np.ndarray, np.ndarray]:
    """Per-region ``credit @ z >= need`` data for the reserve-margin requirement.

    ``credit[r]`` is derated MW per candidate (as coverage fraction 0..1);
    ``need[r]`` is the requirement left after existing derated capacity.
    """
    regions = system.regions
    credit = np.array([system.candidate_credit(r) for r in regions]).reshape(len(regions), system.n_candidates)
    need = np.array([(1.0 + system.reserve_margin.get(r, 0.0)) * peaks.get(r, 0.0)
                     - system.existing_derated_capacity(r) for r in regions])
    return credit, need


def build_tic_node(system: PowerSystem, params: NodeParameters, prev_kappa=None) -> TICNodeProblem:
    """Capital cost of builds at one node subject to at-most-once and reserve margin.

    ``prev_kappa`` is the predecessor's cumulative capacity (zeros at the root).
    """
    assets = system.candidate_assets
    cap = np.array([a.capacity for a in assets])
    prev = np.zeros(len(assets)) if prev_kappa is None else np.asarray(prev_kappa, float)
    b = ModelBuilder()
    x = b.add_vars(len(assets), ub=1.0, cost=params.capital_cost, integer=True, name="x")
    kappa = b.add_vars(len(assets), ub=cap, name="kappa")
    k = len(assets)
    b.add_rows(k, np.r_[np.arange(k), np.arange(k)], np.r_[kappa, x], np.r_[np.ones(k), -cap], "=", prev,
               name="accumulate")
    credit, need = reserve_rows(system, params.peak_by_region)
    # credit is per unit coverage; kappa is MW, so divide by capacity
    per_mw = np.divide(credit, cap, out=np.zeros_like(credit), where=cap > 0)
    rr, cc = np.nonzero(per_mw)
    b.add_rows(len(need), rr, kappa[cc], per_mw[rr, cc], ">=", need, name="reserve")
    return TICNodeProblem(b.build(), x, kappa, params)
