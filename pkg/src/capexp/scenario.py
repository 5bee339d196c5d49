"""Coarse-scale scenario trees and fine-scale Monte Carlo operating days."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate

from .grid import PowerSystem

SEASONS = ("spring", "summer", "fall", "winter")
DAY_KINDS = ("weekday", "weekend")
ALL_DAYS = tuple(f"{s}-{k}" for s in SEASONS for k in DAY_KINDS)
# Order in which ``--days N`` picks representative days: seasons first, weekends after.
DAY_ORDER = ("summer-weekday", "winter-weekday", "spring-weekday", "fall-weekday",
             "summer-weekend", "winter-weekend", "spring-weekend", "fall-weekend")

CUT_IN_SPEED = 3.0
RATED_SPEED = 12.0
NOISE_FRACTION = 0.1

DEFAULT_PROFILE_FILE = Path(__file__).with_name("data") / "profiles.json"


# --------------------------------------------------------------------------
# Scenario tree
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Branch:
    name: str
    cost_factor: float
    demand_factor: float


HIGH = Branch("high", 1.05, 1.15)
LOW = Branch("low", 0.95, 1.05)


@dataclass(frozen=True)
class TreeNode:
    id: int
    stage: int
    parent: int  # 0 for the root
    probability: float
    cost_multiplier: float
    demand_multiplier: float
    branch: str = "root"


@dataclass(frozen=True)
class ScenarioTree:
    nodes: tuple[TreeNode, ...]
    days: tuple[str, ...] = ("summer-weekday",)
    discount: float = 1.0

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, n: int) -> TreeNode:
        return self.nodes[n - 1]

    @property
    def ids(self) -> list[int]:
        return [nd.id for nd in self.nodes]

    @property
    def stages(self) -> int:
        return max(nd.stage for nd in self.nodes)

    def children(self, n: int) -> list[int]:
        return [nd.id for nd in self.nodes if nd.parent == n]

    @property
    def leaves(self) -> list[int]:
        parents = {nd.parent for nd in self.nodes}
        return [nd.id for nd in self.nodes if nd.id not in parents]

    def stage_nodes(self, t: int) -> list[int]:
        return [nd.id for nd in self.nodes if nd.stage == t]

    def path(self, n: int) -> list[int]:
        """Node ids from the root down to ``n`` inclusive."""
        out = []
        while n != 0:
            out.append(n)
            n = self.node(n).parent
        return out[::-1]

    def discount_factor(self, n: int) -> float:
        return self.discount ** (self.node(n).stage - 1)

    def weight(self, n: int) -> float:
        """Objective weight of node ``n``: probability times stage discount."""
        return self.node(n).probability * self.discount_factor(n)


def build_scenario_tree(stages: int, *, branches: Sequence[Branch] = (HIGH, LOW),
                        branch_probabilities: Sequence[float] | Mapping[int, Sequence[float]] | None = None,
                        discount: float = 1.0, days: Sequence[str] = ("summer-weekday",)) -> ScenarioTree:
    """Binary (by default) tree with ``len(branches) ** (t-1)`` nodes at stage ``t``.

    ``branch_probabilities`` is either one sequence used at every stage or a
    mapping from stage (2, 3, ...) to a sequence; default is uniform.
    Node ids are assigned breadth first starting at 1.
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    for d in days:
        if d not in ALL_DAYS:
            raise ValueError(f"unknown representative day {d!r}")
    nb = len(branches)

    def probs_for(stage: int) -> Sequence[float]:
        if branch_probabilities is None:
            return [1.0 / nb] * nb
        if isinstance(branch_probabilities, Mapping):
            return branch_probabilities.get(stage, [1.0 / nb] * nb)
        return branch_probabilities

    for t in range(2, stages + 1):
        p = probs_for(t)
        if len(p) != nb or abs(sum(p) - 1.0) > 1e-12 or min(p) < 0:
            raise ValueError(f"branch probabilities at stage {t} must be {nb} nonnegatives summing to 1")

    nodes = [TreeNode(1, 1, 0, 1.0, 1.0, 1.0)]
    frontier = [nodes[0]]
    for t in range(2, stages + 1):
        nxt = []
        for parent in frontier:
            for br, p in zip(branches, probs_for(t)):
                nd = TreeNode(len(nodes) + 1, t, parent.id, parent.probability * p,
                              parent.cost_multiplier * br.cost_factor,
                              parent.demand_multiplier * br.demand_factor, br.name)
                nodes.append(nd)
                nxt.append(nd)
        frontier = nxt
    return ScenarioTree(tuple(nodes), tuple(days), discount)


@dataclass(frozen=True)
class NodeParameters:
    node: int
    capital_cost: np.ndarray  # $ per candidate asset
    peak_by_region: dict[int, float]
    peak_by_bus: np.ndarray  # MW, aligned with system.buses


def node_parameters(tree: ScenarioTree, n: int, system: PowerSystem) -> NodeParameters:
    """Capital costs and projected peaks at tree node ``n``."""
    nd = tree.node(n)
    scale = nd.cost_multiplier * tree.discount_factor(n)
    cost = np.array([a.capital_cost * a.capacity * 1000.0 * scale for a in system.candidate_assets])
    peaks = np.array([b.peak_load * nd.demand_multiplier for b in system.buses])
    by_region = {r: 0.0 for r in system.regions}
    for b, pk in zip(system.buses, peaks):
        by_region[b.region] += float(pk)
    return NodeParameters(n, cost, by_region, peaks)


# --------------------------------------------------------------------------
# Representative days and sampling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RepresentativeDay:
    season: str
    kind: str
    load: tuple[float, ...]  # 24 hourly fractions of annual peak
    solar: tuple[float, ...]  # 24 hourly expected output ratios
    weibull_scale: float
    weibull_shape: float
    hours: int = 24

    @property
    def name(self) -> str:
        return f"{self.season}-{self.kind}"

    @property
    def index(self) -> int:
        return ALL_DAYS.index(self.name)

    @property
    def hour_index(self) -> np.ndarray:
        """Clock hours used when the day is modelled with fewer than 24 periods."""
        if self.hours == 24:
            return np.arange(24)
        return np.floor(np.linspace(0, 24, self.hours, endpoint=False)).astype(int)

    @property
    def load_profile(self) -> np.ndarray:
        return np.asarray(self.load)[self.hour_index]

    @property
    def solar_profile(self) -> np.ndarray:
        return np.asarray(self.solar)[self.hour_index]


def load_profiles(path: str | Path | None = None, hours: int = 24) -> dict[str, RepresentativeDay]:
    """Read ``profiles[season][day_kind]`` records into representative days."""
    if not 1 <= hours <= 24:
        raise ValueError("hours must be in 1..24")
    doc = json.loads(Path(path or DEFAULT_PROFILE_FILE).read_text(encoding="utf-8"))
    out = {}
    for season, kinds in doc["profiles"].items():
        for kind, rec in kinds.items():
            load, solar = rec["load"], rec["solar"]
            if len(load) != 24 or len(solar) != 24:
                raise ValueError(f"{season}-{kind}: profiles need 24 hourly values")
            w = rec.get("weibull", {})
            day = RepresentativeDay(season, kind, tuple(map(float, load)), tuple(map(float, solar)),
                                    float(w.get("scale", 8.0)), float(w.get("shape", 2.0)), hours)
            out[day.name] = day
    return out


def select_days(days: int | str | Sequence[str]) -> tuple[str, ...]:
    """Resolve ``2`` or ``"summer-weekday,winter-weekend"`` into day names."""
    if isinstance(days, int):
        if not 1 <= days <= len(DAY_ORDER):
            raise ValueError("number of representative days must be in 1..8")
        return DAY_ORDER[:days]
    if isinstance(days, str):
        if days.strip().isdigit():
            return select_days(int(days))
        days = [s.strip() for s in days.split(",") if s.strip()]
    names = tuple(days)
    for n in names:
        if n not in ALL_DAYS:
            raise ValueError(f"unknown representative day {n!r}")
    if len(set(names)) != len(names):
        raise ValueError("duplicate representative day")
    return names


@dataclass(frozen=True, eq=False)
class FineScenario:
    """One sampled operating day at one tree node."""

    id: int
    node: int
    day: str
    demand: np.ndarray  # MW, shape (buses, hours)
    availability: np.ndarray  # fraction of capacity, shape (renewables, hours)
    renewable_ids: tuple[str, ...]
    weight: float

    def availability_of(self, gen_id: str) -> np.ndarray:
        return self.availability[self.renewable_ids.index(gen_id)]


def wind_power_curve(speed, capacity: float = 1.0):
    """Linear power curve between cut-in (3 m/s) and rated (12 m/s) speed."""
    v = np.asarray(speed, dtype=float)
    if np.any(v < 0):
        raise ValueError("wind speed must be nonnegative")
    frac = np.clip((v - CUT_IN_SPEED) / (RATED_SPEED - CUT_IN_SPEED), 0.0, 1.0)
    out = capacity * frac
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def expected_wind_fraction(scale: float, shape: float) -> float:
    """E[power_curve(V)] / capacity for V ~ Weibull(scale, shape)."""
    def survival(v):
        return np.exp(-(v / scale) ** shape)
    val, _ = integrate.quad(survival, CUT_IN_SPEED, RATED_SPEED)
    return val / (RATED_SPEED - CUT_IN_SPEED)


def _stream(seed: int, node: int, day: RepresentativeDay, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, node, day.index, index])


def sample_fine_scenarios(system: PowerSystem, node: TreeNode, day: RepresentativeDay, count: int,
                          seed: int) -> list[FineScenario]:
    """Monte Carlo operating days for one (tree node, representative day).

    Demand per bus and hour is normal around ``peak * multiplier * profile``
    with a 10% coefficient of variation, clamped at zero. Solar output ratio
    is normal around the seasonal profile with the same relative spread,
    clamped to [0, 1]; wind availability is the power curve applied to a
    Weibull speed draw. Each scenario uses its own generator keyed by
    ``(seed, node, day, index)``, so scenarios can be drawn in any order.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    peaks = np.array([b.peak_load for b in system.buses]) * node.demand_multiplier
    mean = np.outer(peaks, day.load_profile)
    solar_mean = day.solar_profile
    rens = system.renewable_generators
    ids = tuple(g.id for g in rens)
    hours = len(day.hour_index)
    out = []
    for i in range(count):
        rng = _stream(seed, node.id, day, i)
        demand = np.maximum(rng.normal(mean, NOISE_FRACTION * mean), 0.0)
        avail = np.zeros((len(rens), hours))
        for r, g in enumerate(rens):
            if g.kind == "solar":
                avail[r] = np.clip(rng.normal(solar_mean, NOISE_FRACTION * solar_mean), 0.0, 1.0)
            else:
                speed = day.weibull_scale * rng.weibull(day.weibull_shape, hours)
                avail[r] = wind_power_curve(speed)
        demand.setflags(write=False)
        avail.setflags(write=False)
        out.append(FineScenario(i, node.id, day.name, demand, avail, ids, 1.0 / count))
    return out


def mean_scenario(system: PowerSystem, node: TreeNode, day: RepresentativeDay) -> FineScenario:
    """Expected-value operating day (the deterministic lower-level benchmark)."""
    peaks = np.array([b.peak_load for b in system.buses]) * node.demand_multiplier
    demand = np.outer(peaks, day.load_profile)
    rens = system.renewable_generators
    hours = len(day.hour_index)
    avail = np.zeros((len(rens), hours))
    wind = expected_wind_fraction(day.weibull_scale, day.weibull_shape)
    for r, g in enumerate(rens):
        avail[r] = np.clip(day.solar_profile, 0, 1) if g.kind == "solar" else wind
    demand.setflags(write=False)
    avail.setflags(write=False)
    return FineScenario(0, node.id, day.name, demand, avail, tuple(g.id for g in rens), 1.0)


@dataclass
class ScenarioSet:
    """Fine scenarios for every (node, day) of a tree."""

    by_node_day: dict[tuple[int, str], list[FineScenario]] = field(default_factory=dict)

    def get(self, node: int, day: str) -> list[FineScenario]:
        return self.by_node_day.get((node, day), [])

    def count(self) -> int:
        return sum(len(v) for v in self.by_node_day.values())


def sample_all(system: PowerSystem, tree: ScenarioTree, count: int, seed: int, *, hours: int = 24,
               profiles: Mapping[str, RepresentativeDay] | None = None,
               deterministic: bool = False) -> ScenarioSet:
    """Sample ``count`` scenarios for every node and representative day of ``tree``.

    With ``deterministic=True`` each (node, day) gets the single mean scenario.
    ``count == 0`` yields an empty set (pure expansion problem).
    """
    profiles = profiles or load_profiles(hours=hours)
    out = ScenarioSet()
    for nd in tree.nodes:
        for name in tree.days:
            day = profiles[name]
            if day.hours != hours:
                day = RepresentativeDay(day.season, day.kind, day.load, day.solar,
                                        day.weibull_scale, day.weibull_shape, hours)
            if deterministic:
                out.by_node_day[(nd.id, name)] = [mean_scenario(system, nd, day)]
            elif count > 0:
                out.by_node_day[(nd.id, name)] = sample_fine_scenarios(system, nd, day, count, seed)
    return out
