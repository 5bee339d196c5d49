"""Cut generators for the per-node secondary master and the per-node cut pools."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from ..solver import ContractError, LE, InfeasibilityCertificate, LinearModel
from ..solver.base import box_max

BENDERS_FEASIBILITY = "benders-feasibility"
BENDERS_OPTIMALITY = "benders-optimality"
INTEGER_FEASIBILITY = "integer-feasibility"
INTEGER_OPTIMALITY = "integer-optimality"
MONOTONE_OPTIMALITY = "monotone-optimality"


@dataclass(frozen=True, eq=False)
class Cut:
    """``rho @ z + nu * theta >= rhs`` on one node's secondary master."""

    node: int
    kind: str
    rho: np.ndarray
    nu: float
    rhs: float
    iteration: int = 0
    theta_index: int | None = None

    def slack(self, z, theta) -> float:
        """Left side minus right side; negative means the point violates the cut."""
        z = np.asarray(z, float)
        if np.ndim(theta) and self.theta_index is not None:
            t = float(np.asarray(theta)[self.theta_index])
        else:
            t = float(np.sum(theta))
        return float(self.rho @ z + self.nu * t - self.rhs)

    def satisfied(self, z, theta, tol: float = 1e-6) -> bool:
        scale = max(1.0, abs(self.rhs), abs(self.nu * float(np.sum(theta))))
        return self.slack(z, theta) >= -tol * scale

    def key(self) -> tuple:
        return (self.kind, self.theta_index, round(self.nu, 9), round(self.rhs, 6),
                tuple(np.round(self.rho, 6)))


class CutPool:
    """Append-only list of cuts for one node, deduplicated by coefficients."""

    def __init__(self, node: int):
        self.node = node
        self._cuts: list[Cut] = []
        self._keys: set[tuple] = set()
        self._lock = threading.Lock()

    def add(self, cut: Cut) -> bool:
        k = cut.key()
        with self._lock:
            if k in self._keys:
                return False
            self._keys.add(k)
            self._cuts.append(cut)
            return True

    def clear(self) -> None:
        with self._lock:
            self._cuts.clear()
            self._keys.clear()

    def __len__(self) -> int:
        return len(self._cuts)

    def __iter__(self) -> Iterator[Cut]:
        return iter(list(self._cuts))

    def count(self, kind: str) -> int:
        return sum(c.kind == kind for c in self._cuts)


def make_benders_optimality_cut(values: Sequence[float], duals: Sequence[np.ndarray],
                                couplings: Sequence[sp.spmatrix], z_hat, weights: Sequence[float], *,
                                node: int = 0, iteration: int = 0, theta_index: int | None = None) -> Cut:
    """Aggregate LP-relaxation subgradients into ``theta >= sum_p w_p (Q_p + g_p @ (z - z_hat))``.

    ``duals[p]`` are the row duals of subproblem ``p`` (d objective / d rhs) and
    ``couplings[p]`` maps ``z`` into its right-hand side, so ``g_p = C_p.T @ mu_p``.
    """
    z_hat = np.asarray(z_hat, float)
    if not (len(values) == len(duals) == len(couplings) == len(weights)):
        raise ContractError("one value, dual vector, coupling matrix and weight per scenario")
    grad = np.zeros_like(z_hat)
    const = 0.0
    for q, mu, C, w in zip(values, duals, couplings, weights):
        if mu is None:
            raise ContractError("missing subproblem duals")
        g = np.asarray(C.T @ np.asarray(mu, float)).ravel()
        grad += w * g
        const += w * (q - g @ z_hat)
    return Cut(node, BENDERS_OPTIMALITY, -grad, 1.0, float(const), iteration, theta_index)


def aggregate_gradient_cut(value: float, gradient, z_hat, *, node: int = 0, iteration: int = 0,
                           theta_index: int | None = None) -> Cut:
    """Benders optimality cut from an already weighted value and subgradient."""
    g = np.asarray(gradient, float)
    z_hat = np.asarray(z_hat, float)
    return Cut(node, BENDERS_OPTIMALITY, -g, 1.0, float(value - g @ z_hat), iteration, theta_index)


def make_benders_feasibility_cut(certificate: InfeasibilityCertificate, model: LinearModel, rhs0, Cz, *,
                                 node: int = 0, iteration: int = 0) -> Cut:
    """Cut excluding every ``z`` for which the certificate still proves infeasibility.

    The subproblem at ``z`` has right-hand side ``rhs0 + Cz @ z``; the
    certificate (in ``>=`` orientation) stays valid while
    ``y @ (sigma * rhs(z)) > max_box(g @ x)``, so feasibility requires the opposite.
    """
    if not certificate.is_valid(model):
        raise ContractError("invalid infeasibility certificate")
    sign = np.where(model.sense == LE, -1.0, 1.0)
    y = certificate.ray * sign
    g = model.A.T @ y
    k = box_max(g, model.lb, model.ub)
    rho = -np.asarray(Cz.T @ y).ravel()
    rhs = float(y @ np.asarray(rhs0, float) - k)
    return Cut(node, BENDERS_FEASIBILITY, rho, 0.0, rhs, iteration)


def make_integer_optimality_cut(z_hat, q_hat: float, lower: float = 0.0, *, node: int = 0, iteration: int = 0,
                                theta_index: int | None = None) -> Cut:
    """Laporte-Louveaux cut, tight at binary ``z_hat`` and at most ``lower`` elsewhere."""
    if q_hat < lower - 1e-9:
        raise ContractError("recourse value below its lower bound")
    z_hat = np.round(np.asarray(z_hat, float))
    span = q_hat - lower
    S = float(z_hat.sum())
    rho = -span * (2.0 * z_hat - 1.0)
    rhs = span * (1.0 - S) + lower
    return Cut(node, INTEGER_OPTIMALITY, rho, 1.0, float(rhs), iteration, theta_index)


def make_integer_feasibility_cut(z_hat, *, node: int = 0, iteration: int = 0) -> Cut:
    """No-good cut excluding exactly the binary point ``z_hat``."""
    z_hat = np.round(np.asarray(z_hat, float))
    return Cut(node, INTEGER_FEASIBILITY, 1.0 - 2.0 * z_hat, 0.0, float(1.0 - z_hat.sum()), iteration)


def make_monotone_cut(z_hat, q_lower: float, lower: float = 0.0, *, node: int = 0, iteration: int = 0,
                      theta_index: int | None = None) -> Cut:
    """``theta >= q_lower`` on every ``z <= z_hat``, relaxing to ``lower`` once an extra asset is added.

    Valid when the recourse never increases with added capacity and
    ``q_lower`` bounds the recourse at ``z_hat`` from below.
    """
    if q_lower < lower - 1e-9:
        raise ContractError("recourse bound below its lower bound")
    z_hat = np.round(np.asarray(z_hat, float))
    span = q_lower - lower
    return Cut(node, MONOTONE_OPTIMALITY, span * (1.0 - z_hat), 1.0, float(q_lower), iteration, theta_index)
