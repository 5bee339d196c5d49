"""Secant piecewise-linear approximation of convex quadratic generation costs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PiecewiseCost:
    a: float
    breakpoints: np.ndarray  # segments + 1 points on [0, P_max]
    slopes: np.ndarray  # one per segment, nondecreasing

    @property
    def segments(self) -> int:
        return len(self.slopes)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def __call__(self, p) -> np.ndarray | float:
        p = np.asarray(p, dtype=float)
        fill = np.clip(p[..., None] - self.breakpoints[:-1], 0.0, self.widths)
        val = self.a + fill @ self.slopes
        return float(val) if val.ndim == 0 else val

    def max_error(self, c: float) -> float:
        """Largest overestimate of ``c p^2`` on any segment (attained at segment midpoints)."""
        return float(c * self.widths.max(initial=0.0) ** 2 / 4.0)


def piecewise_linearize(a: float, b: float, c: float, p_max: float, segments: int) -> PiecewiseCost:
    """Secants of ``a + b p + c p^2`` on uniform breakpoints over ``[0, p_max]``.

    A linear cost (``c == 0``) collapses to one segment with slope ``b``.
    """
    if c < 0:
        raise ValueError("quadratic coefficient must be nonnegative")
    if segments < 1:
        raise ValueError("segments must be >= 1")
    if p_max <= 0:
        raise ValueError("p_max must be positive")
    if c == 0:
        return PiecewiseCost(float(a), np.array([0.0, float(p_max)]), np.array([float(b)]))
    bp = np.linspace(0.0, p_max, segments + 1)
    f = b * bp + c * bp ** 2
    return PiecewiseCost(float(a), bp, np.diff(f) / np.diff(bp))
