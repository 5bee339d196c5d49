"""Monolithic deterministic-equivalent MILP over the whole tree."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..grid import PowerSystem
from ..scenario import NodeParameters, ScenarioSet, ScenarioTree, node_parameters
from ..solver import LinearModel, ModelBuilder
from .tic import reserve_rows
from .uc import DEFAULT_SEGMENTS, build_uc

DEFAULT_MAX_VARS = 5_000_000


class ModelTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ExtensiveForm:
    model: LinearModel
    x: dict[int, np.ndarray]  # build binaries per node
    z: dict[int, np.ndarray]  # cumulative coverage per node
    uc_blocks: tuple[tuple[int, str, int, np.ndarray], ...]  # (node, day, scenario, var indices)

    @property
    def num_upper_binaries(self) -> int:
        return int(sum(self.model.integer[idx].sum() for idx in self.x.values()))


def build_extensive(system: PowerSystem, tree: ScenarioTree, scenarios: ScenarioSet, *,
                    params: Mapping[int, NodeParameters] | None = None, segments: int = DEFAULT_SEGMENTS,
                    max_vars: int = DEFAULT_MAX_VARS) -> ExtensiveForm:
    """Deterministic equivalent with one UC block per (node, day, scenario).

    The objective is ``sum_n pi_n * capital_n + w_n * sum_k mean TOC`` where
    ``w_n`` folds in the stage discount. Raises :class:`ModelTooLarge` when the
    variable count would exceed ``max_vars``.
    """
    params = params or {n: node_parameters(tree, n, system) for n in tree.ids}
    k = system.n_candidates
    blocks = [(n, d, sc) for n in tree.ids for d in tree.days for sc in scenarios.get(n, d)]
    est = 2 * k * len(tree)
    if blocks:
        probe = build_uc(system, None, blocks[0][2], segments=segments)
        est += probe.model.num_vars * len(blocks)
    if est > max_vars:
        raise ModelTooLarge(f"extensive form would have about {est:,} variables (limit {max_vars:,}); "
                            "use a decomposition algorithm or raise the limit")

    b = ModelBuilder()
    x, z = {}, {}
    for n in tree.ids:
        x[n] = b.add_vars(k, ub=1.0, cost=tree.node(n).probability * params[n].capital_cost, integer=True,
                          name=f"x{n}")
    for n in tree.ids:
        z[n] = b.add_vars(k, ub=1.0, name=f"z{n}")
        path = tree.path(n)
        rows = np.r_[np.arange(k), np.tile(np.arange(k), len(path))]
        cols = np.r_[z[n], np.concatenate([x[m] for m in path])]
        vals = np.r_[np.ones(k), -np.ones(k * len(path))]
        b.add_rows(k, rows, cols, vals, "=", 0.0, name=f"cumulative{n}")
        credit, need = reserve_rows(system, params[n].peak_by_region)
        rr, cc = np.nonzero(credit)
        b.add_rows(len(need), rr, z[n][cc], credit[rr, cc], ">=", need, name=f"reserve{n}")

    uc_blocks = []
    for n, day, sc in blocks:
        uc = build_uc(system, None, sc, segments=segments)
        m = uc.model
        w = tree.weight(n) * sc.weight
        y = b.add_vars(m.num_vars, lb=m.lb, ub=m.ub, cost=w * m.c, integer=m.integer)
        A = m.A.tocoo()
        Cz = uc.Cz.tocoo()
        rows = np.r_[A.row, Cz.row]
        cols = np.r_[y[A.col], z[n][Cz.col]]
        vals = np.r_[A.data, -Cz.data]
        b.add_rows(m.num_rows, rows, cols, vals, m.sense, uc.rhs0, name="uc")
        b.offset += w * m.offset
        uc_blocks.append((n, day, sc.id, y))
    return ExtensiveForm(b.build(), x, z, tuple(uc_blocks))
