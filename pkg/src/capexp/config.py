"""Run configuration shared by the CLI and every algorithm."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, replace

from .formulations import DEFAULT_MAX_VARS, DEFAULT_SEGMENTS
from .solver.model import DEFAULT_MIP_GAP

ALGORITHMS = ("ncd", "cg", "benders", "direct")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "ncd"
    system: str = "sixbus.json"
    stages: int = 3
    days: tuple[str, ...] = ("summer-weekday",)
    scenarios: int = 10
    hours: int = 24
    seed: int = 7
    gap: float = 0.01
    time_limit: float | None = None  # seconds, whole run
    threads: int = 1
    warm_start: bool = True
    voll: float = 10_000.0
    discount: float = 1.0
    segments: int = DEFAULT_SEGMENTS
    reserve_margin: float | None = None  # None keeps the system file's value
    max_vars: int = DEFAULT_MAX_VARS
    mip_gap: float = DEFAULT_MIP_GAP  # subproblem MILPs
    multicut: bool = False
    monotone_cuts: bool = True  # recourse is nonincreasing in capacity
    heuristics: bool = False  # also try rounded master coverage as incumbents
    branching: bool = True
    reserve_in_pricing: bool = True
    deterministic_lower_level: bool = False
    max_outer: int = 500
    max_inner: int = 500
    backend: str | None = None
    dump_models: str | None = None
    branch_probabilities: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.stages < 1 or self.scenarios < 1 or self.threads < 1 or self.segments < 1:
            raise ValueError("stages, scenarios, threads and segments must be >= 1")
        if not self.days:
            raise ValueError("at least one representative day is required")
        if not 2 <= self.hours <= 24:
            raise ValueError("hours must be in 2..24")
        if not 0 < self.gap < 1:
            raise ValueError("gap must be in (0, 1)")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")
        if self.reserve_margin is not None and self.reserve_margin < 0:
            raise ValueError("reserve margin must be nonnegative")

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


def effective_threads(requested: int) -> int:
    """``NCD_THREADS`` overrides the requested worker count."""
    env = os.environ.get("NCD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"NCD_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("NCD_THREADS must be >= 1")
        return n
    return requested
