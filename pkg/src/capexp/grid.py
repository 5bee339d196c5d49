"""Power-system data model: buses, generators, lines, storage.

A :class:`PowerSystem` is loaded once from a JSON file and never mutated.
Every bus receives a penalty generator on load so that any operating day is
feasible (unserved energy is priced at the value of lost load).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_VOLL = 10_000.0
DEFAULT_RESERVE_MARGIN = 0.15
DEFAULT_STORAGE_EFFICIENCY = 0.9
PENALTY_CAPACITY_FACTOR = 10.0

THERMAL_KINDS = ("coal", "gas")
RENEWABLE_KINDS = ("solar", "wind")
GENERATOR_KINDS = THERMAL_KINDS + RENEWABLE_KINDS + ("penalty",)

# Capacity credit used in the reserve-margin constraint when a record has none.
DEFAULT_DERATING = {"coal": 1.0, "gas": 1.0, "wind": 0.2, "solar": 0.3, "storage": 1.0, "penalty": 0.0}

PACKAGE_FIXTURES = Path(__file__).with_name("fixtures")


class GridDataError(ValueError):
    """Base class for problems with power-system input data."""


class SystemParseError(GridDataError):
    pass


class SystemValidationError(GridDataError):
    pass


class BuildViolation(GridDataError):
    """An asset is built more than once along a scenario-tree path."""


@dataclass(frozen=True)
class Bus:
    id: int
    peak_load: float = 0.0
    region: int = 1
    spinning_reserve: float = 0.0


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    existing: bool
    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    startup_cost: float = 0.0
    p_min: float = 0.0
    p_max: float = 0.0
    min_on: int = 0
    min_off: int = 0
    ramp: float = 0.0
    derating: float = 1.0
    capital_cost: float = 0.0

    @property
    def capacity(self) -> float:
        return self.p_max

    @property
    def renewable(self) -> bool:
        return self.kind in RENEWABLE_KINDS

    @property
    def penalty(self) -> bool:
        return self.kind == "penalty"


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    from_bus: int
    to_bus: int
    existing: bool
    flow_limit: float
    loss: float = 0.0
    capital_cost: float = 0.0

    @property
    def capacity(self) -> float:
        return self.flow_limit


@dataclass(frozen=True)
class StorageDevice:
    id: str
    bus: int
    existing: bool
    capacity: float
    efficiency: float = DEFAULT_STORAGE_EFFICIENCY
    capital_cost: float = 0.0
    derating: float = 1.0


@dataclass(frozen=True)
class Asset:
    """A candidate investment, in the fixed order used for every z / x vector."""

    kind: str  # "generator" | "line" | "storage"
    id: str
    capacity: float
    capital_cost: float  # $/kW


@dataclass(frozen=True)
class PowerSystem:
    name: str
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    lines: tuple[TransmissionLine, ...]
    storages: tuple[StorageDevice, ...]
    reserve_margin: Mapping[int, float] = field(default_factory=dict)
    voll: float = DEFAULT_VOLL

    # -- sets -------------------------------------------------------------
    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)

    @property
    def existing_generators(self) -> list[Generator]:
        return [g for g in self.generators if g.existing and not g.penalty]

    @property
    def candidate_generators(self) -> list[Generator]:
        return [g for g in self.generators if not g.existing]

    @property
    def penalty_generators(self) -> list[Generator]:
        return [g for g in self.generators if g.penalty]

    @property
    def unit_generators(self) -> list[Generator]:
        """Generators with commitment decisions (everything but penalty units)."""
        return [g for g in self.generators if not g.penalty]

    @property
    def renewable_generators(self) -> list[Generator]:
        return [g for g in self.generators if g.renewable]

    @property
    def existing_lines(self) -> list[TransmissionLine]:
        return [l for l in self.lines if l.existing]

    @property
    def candidate_lines(self) -> list[TransmissionLine]:
        return [l for l in self.lines if not l.existing]

    @property
    def existing_storages(self) -> list[StorageDevice]:
        return [s for s in self.storages if s.existing]

    @property
    def candidate_storages(self) -> list[StorageDevice]:
        return [s for s in self.storages if not s.existing]

    @property
    def load_buses(self) -> list[Bus]:
        return [b for b in self.buses if b.peak_load > 0]

    @property
    def regions(self) -> list[int]:
        return sorted({b.region for b in self.buses})

    @property
    def total_peak(self) -> float:
        return float(sum(b.peak_load for b in self.buses))

    @property
    def candidate_assets(self) -> list[Asset]:
        out = [Asset("generator", g.id, g.p_max, g.capital_cost) for g in self.candidate_generators]
        out += [Asset("line", l.id, l.flow_limit, l.capital_cost) for l in self.candidate_lines]
        out += [Asset("storage", s.id, s.capacity, s.capital_cost) for s in self.candidate_storages]
        return out

    @property
    def n_candidates(self) -> int:
        return len(self.candidate_generators) + len(self.candidate_lines) + len(self.candidate_storages)

    def asset_index(self, asset_id: str) -> int:
        for i, a in enumerate(self.candidate_assets):
            if a.id == asset_id:
                return i
        raise KeyError(asset_id)

    def region_of(self, bus_id: int) -> int:
        return self.buses[self.bus_index(bus_id)].region

    def existing_derated_capacity(self, region: int) -> float:
        return float(sum(g.derating * g.p_max for g in self.existing_generators
                         if self.region_of(g.bus) == region))

    def candidate_credit(self, region: int) -> np.ndarray:
        """Derated MW credited to ``region`` per candidate asset (zero for lines/storage)."""
        credit = np.zeros(self.n_candidates)
        for i, g in enumerate(self.candidate_generators):
            if self.region_of(g.bus) == region:
                credit[i] = g.derating * g.p_max
        return credit

    def with_overrides(self, *, reserve_margin: float | None = None, voll: float | None = None,
                       derating: float | None = None) -> "PowerSystem":
        """Copy with a uniform reserve margin, VOLL, or derating factor applied."""
        gens = self.generators
        if derating is not None:
            gens = tuple(g if g.penalty else _replace(g, derating=derating) for g in gens)
        if voll is not None:
            gens = tuple(_replace(g, b=voll) if g.penalty else g for g in gens)
        rm = dict(self.reserve_margin)
        if reserve_margin is not None:
            rm = {r: reserve_margin for r in self.regions}
        return PowerSystem(self.name, self.buses, gens, self.lines, self.storages, rm,
                           self.voll if voll is None else voll)

    def without_penalties(self) -> "PowerSystem":
        gens = tuple(g for g in self.generators if not g.penalty)
        return PowerSystem(self.name, self.buses, gens, self.lines, self.storages,
                           dict(self.reserve_margin), self.voll)


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------

def resolve_system_path(path: str | Path) -> Path:
    """Return ``path``, or the packaged fixture with the same file name."""
    p = Path(path)
    if p.exists():
        return p
    packaged = PACKAGE_FIXTURES / p.name
    if packaged.exists():
        return packaged
    raise SystemParseError(f"system file not found: {path}")


def load_system(path: str | Path, *, voll: float = DEFAULT_VOLL, penalties: bool = True) -> PowerSystem:
    """Read and validate a system JSON file.

    Parameters
    ----------
    path : str or Path
        JSON document with ``buses``, ``generators``, ``lines``, ``storages``.
        A bare fixture name such as ``sixbus.json`` resolves to the packaged copy.
    voll : float
        Value of lost load [$/MWh] charged by the penalty generators.
    penalties : bool
        Append one penalty generator per bus (default). Disabling this removes
        the guarantee that every operating day is feasible.
    """
    p = resolve_system_path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SystemParseError(f"{p}: {exc}") from exc
    return system_from_dict(doc, voll=voll, penalties=penalties, name=p.stem)


def system_from_dict(doc: Mapping, *, voll: float = DEFAULT_VOLL, penalties: bool = True,
                     name: str | None = None) -> PowerSystem:
    if not isinstance(doc, Mapping):
        raise SystemParseError("top level must be a JSON object")
    for key in ("buses", "generators", "lines", "storages"):
        if key in doc and not isinstance(doc[key], list):
            raise SystemParseError(f"'{key}' must be an array")
    try:
        buses = tuple(_bus(rec) for rec in doc.get("buses", []))
        gens = [_generator(rec) for rec in doc.get("generators", [])]
        lines = tuple(_line(rec) for rec in doc.get("lines", []))
        stores = tuple(_storage(rec) for rec in doc.get("storages", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise SystemParseError(f"malformed record: {exc}") from exc

    default_rm = float(doc.get("reserve_margin", DEFAULT_RESERVE_MARGIN))
    regions = sorted({b.region for b in buses})
    rm = {r: default_rm for r in regions}
    for key, val in (doc.get("regions") or {}).items():
        rm[int(key)] = float(val.get("reserve_margin", default_rm))

    _validate(buses, gens, lines, stores)
    if penalties:
        cap = PENALTY_CAPACITY_FACTOR * max(sum(b.peak_load for b in buses), 1.0)
        gens += [Generator(id=f"PEN{b.id}", bus=b.id, existing=True, kind="penalty", b=voll,
                           p_max=cap, ramp=cap, derating=0.0) for b in buses]
    return PowerSystem(name or str(doc.get("name", "system")), buses, tuple(gens), lines, stores, rm, voll)


def _bus(rec: Mapping) -> Bus:
    return Bus(int(rec["id"]), float(rec.get("peak_load", 0.0)), int(rec.get("region", 1)),
               float(rec.get("spinning_reserve", 0.0)))


def _generator(rec: Mapping) -> Generator:
    kind = str(rec["kind"]).lower()
    if kind not in GENERATOR_KINDS or kind == "penalty":
        raise ValueError(f"generator {rec.get('id')}: unknown kind {kind!r}")
    return Generator(
        id=str(rec["id"]), bus=int(rec["bus"]), existing=bool(rec["existing"]), kind=kind,
        a=float(rec.get("a", 0.0)), b=float(rec.get("b", 0.0)), c=float(rec.get("c", 0.0)),
        startup_cost=float(rec.get("startup_cost", 0.0)),
        p_min=float(rec.get("p_min", 0.0)), p_max=float(rec["p_max"]),
        min_on=int(rec.get("min_on", 0)), min_off=int(rec.get("min_off", 0)),
        ramp=float(rec.get("ramp", rec["p_max"])),
        derating=float(rec.get("derating", DEFAULT_DERATING[kind])),
        capital_cost=float(rec.get("capital_cost", 0.0)),
    )


def _line(rec: Mapping) -> TransmissionLine:
    return TransmissionLine(str(rec["id"]), int(rec["from_bus"]), int(rec["to_bus"]), bool(rec["existing"]),
                            float(rec["flow_limit"]), float(rec.get("loss", 0.0)),
                            float(rec.get("capital_cost", 0.0)))


def _storage(rec: Mapping) -> StorageDevice:
    return StorageDevice(str(rec["id"]), int(rec["bus"]), bool(rec["existing"]), float(rec["capacity"]),
                         float(rec.get("efficiency", DEFAULT_STORAGE_EFFICIENCY)),
                         float(rec.get("capital_cost", 0.0)),
                         float(rec.get("derating", DEFAULT_DERATING["storage"])))


def _validate(buses, gens, lines, stores) -> None:
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        raise SystemValidationError("duplicate bus id")
    known = set(ids)
    for b in buses:
        if b.peak_load < 0:
            raise SystemValidationError(f"bus {b.id}: negative peak load")
    seen: set[str] = set()

    def unique(kind, rid):
        key = f"{kind}:{rid}"
        if key in seen:
            raise SystemValidationError(f"{kind} {rid}: duplicate id")
        seen.add(key)

    for g in gens:
        unique("generator", g.id)
        if g.bus not in known:
            raise SystemValidationError(f"generator {g.id}: unknown bus {g.bus}")
        if g.p_max <= 0:
            raise SystemValidationError(f"generator {g.id}: nonpositive capacity p_max={g.p_max}")
        if not 0 <= g.p_min <= g.p_max:
            raise SystemValidationError(f"generator {g.id}: need 0 <= p_min <= p_max")
        if g.ramp <= 0:
            raise SystemValidationError(f"generator {g.id}: ramp must be positive")
        if g.c < 0:
            raise SystemValidationError(f"generator {g.id}: negative quadratic cost")
        if not 0 <= g.derating <= 1:
            raise SystemValidationError(f"generator {g.id}: derating outside [0, 1]")
        if g.min_on < 0 or g.min_off < 0:
            raise SystemValidationError(f"generator {g.id}: negative minimum up/down time")
    for l in lines:
        unique("line", l.id)
        for end in (l.from_bus, l.to_bus):
            if end not in known:
                raise SystemValidationError(f"line {l.id}: unknown bus {end}")
        if l.from_bus == l.to_bus:
            raise SystemValidationError(f"line {l.id}: from_bus equals to_bus")
        if l.flow_limit <= 0:
            raise SystemValidationError(f"line {l.id}: nonpositive capacity flow_limit={l.flow_limit}")
        if not 0 <= l.loss < 1:
            raise SystemValidationError(f"line {l.id}: loss outside [0, 1)")
    for s in stores:
        unique("storage", s.id)
        if s.bus not in known:
            raise SystemValidationError(f"storage {s.id}: unknown bus {s.bus}")
        if s.capacity <= 0:
            raise SystemValidationError(f"storage {s.id}: nonpositive capacity {s.capacity}")
        if not 0 < s.efficiency <= 1:
            raise SystemValidationError(f"storage {s.id}: efficiency outside (0, 1]")


# --------------------------------------------------------------------------
# Capacity arithmetic
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionState:
    """Cumulative candidate capacity [MW] at one tree node, keyed by asset id."""

    capacity: Mapping[str, float]

    def __getitem__(self, asset_id: str) -> float:
        return self.capacity[asset_id]

    @classmethod
    def from_coverage(cls, system: PowerSystem, z: Sequence[float]) -> "ExpansionState":
        assets = system.candidate_assets
        if len(z) != len(assets):
            raise ValueError("coverage vector length does not match candidate assets")
        return cls({a.id: a.capacity * float(v) for a, v in zip(assets, z)})


def cumulative_capacity(path_builds: Iterable[float], capacity: float) -> float:
    """Capacity available after the builds along a root-to-node path.

    ``path_builds`` lists the build indicator of one asset at each node of the
    path, root first. Building the same asset twice raises :class:`BuildViolation`.
    """
    total = 0.0
    for x in path_builds:
        if x not in (0, 1, 0.0, 1.0, True, False):
            raise ValueError(f"build decision must be binary, got {x!r}")
        total += float(x)
    if total > 1:
        raise BuildViolation(f"asset built {int(total)} times on one path")
    return capacity * total


def reserve_margin_slack(system: PowerSystem, peak_by_region: Mapping[int, float],
                         state: ExpansionState | None = None) -> dict[int, float]:
    """Derated capacity minus the reserve requirement, per region (>= 0 means satisfied)."""
    out = {}
    for region in system.regions:
        cap = system.existing_derated_capacity(region)
        if state is not None:
            for g in system.candidate_generators:
                if system.region_of(g.bus) == region:
                    cap += g.derating * state.capacity.get(g.id, 0.0)
        need = (1.0 + system.reserve_margin.get(region, DEFAULT_RESERVE_MARGIN)) * peak_by_region.get(region, 0.0)
        out[region] = cap - need
    return out


def peak_by_region(system: PowerSystem, multiplier: float = 1.0) -> dict[int, float]:
    out = {r: 0.0 for r in system.regions}
    for b in system.buses:
        out[b.region] += b.peak_load * multiplier
    return out


def random_system(seed: int, buses: int = 3, *, voll: float = DEFAULT_VOLL) -> PowerSystem:
    """Small random test system on a bus chain with one candidate of each asset type.

    Bus 1 holds an existing coal unit; load sits on the other buses. The
    existing capacity may or may not meet the reserve requirement.
    """
    if not 2 <= buses <= 6:
        raise ValueError("random systems have 2 to 6 buses")
    rng = np.random.default_rng(seed)
    loads = np.r_[0.0, np.round(rng.uniform(20, 60, buses - 1))]
    peak = loads.sum()
    doc = {
        "name": f"random{seed}",
        "reserve_margin": 0.15,
        "buses": [{"id": i + 1, "peak_load": float(loads[i])} for i in range(buses)],
        "generators": [
            {"id": "G1", "bus": 1, "existing": True, "kind": "coal", "a": 50, "b": float(rng.uniform(12, 20)),
             "c": 0.001, "startup_cost": 50, "p_min": 5, "p_max": float(np.round(peak * rng.uniform(0.9, 1.3))),
             "min_on": 2, "min_off": 2, "capital_cost": 900},
            {"id": "G2", "bus": buses, "existing": False, "kind": "gas", "a": 20, "b": float(rng.uniform(25, 40)),
             "c": 0.002, "startup_cost": 20, "p_min": 2, "p_max": float(np.round(peak * rng.uniform(0.3, 0.6))),
             "min_on": 1, "min_off": 1, "capital_cost": float(rng.uniform(300, 900))},
            {"id": "W1", "bus": buses, "existing": False, "kind": "wind", "p_max": float(np.round(peak * 0.3)),
             "capital_cost": float(rng.uniform(600, 1500))},
        ],
        "lines": [{"id": f"L{i}", "from_bus": i, "to_bus": i + 1, "existing": True,
                   "flow_limit": float(np.round(peak * rng.uniform(0.6, 1.2)))} for i in range(1, buses)]
                 + [{"id": "LX", "from_bus": 1, "to_bus": buses, "existing": False,
                     "flow_limit": float(np.round(peak * 0.5)), "capital_cost": float(rng.uniform(20, 80))}],
        "storages": [{"id": "S1", "bus": buses, "existing": False, "capacity": float(np.round(peak * 0.2)),
                      "capital_cost": float(rng.uniform(200, 600))}],
    }
    return system_from_dict(doc, voll=voll)
