"""Scenario configuration: domain types, loading, validation and distances.

A scenario lives in a directory holding ``scenario.toml`` plus sibling CSV
tables for bulk data (zones, carriers, lockers, marginals, motives, priors).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import tomli
import tomli_w

from .errors import ParseError, ValidationError

EARTH_RADIUS_KM = 6371.0088

HOME_COURIER = "home_courier"
PARCEL_LOCKER = "parcel_locker"
CROWDSHIPPING = "crowdshipping"
KNOWN_CHANNELS = (HOME_COURIER, PARCEL_LOCKER, CROWDSHIPPING)

MOTIVE_GROUPS = ("experiential", "social", "values")
LAYERS = ("friendship", "job", "neighborhood")
OD_PATTERNS = ("depot", "population")

SCENARIO_FILE = "scenario.toml"
BUNDLED_DIR = Path(__file__).parent / "scenarios"


def great_circle_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in km between two (lat, lon) pairs in degrees."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _valid_coords(lat: float, lon: float) -> bool:
    return -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0


@dataclass(frozen=True)
class Zone:
    zone_id: str
    lat: float
    lon: float
    population_weight: float

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat, self.lon)


@dataclass(frozen=True)
class Carrier:
    carrier_id: str
    market_share: float
    success_rate: float
    depot_zone: str
    vehicle_capacity: int = 120


@dataclass(frozen=True)
class LockerSpec:
    locker_id: str
    zone: str
    lat: float
    lon: float
    capacity: int
    # Cyclic per-day availability, "1" open / "0" closed; day 1 uses index 0.
    availability: str = "1"

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat, self.lon)

    def available_on(self, day: int) -> bool:
        return self.availability[(day - 1) % len(self.availability)] == "1"


@dataclass(frozen=True)
class Attribute:
    name: str
    categories: tuple[str, ...]


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(name)

    def __getitem__(self, name: str) -> Attribute:
        return self.attributes[self.index(name)]

    def __contains__(self, name: object) -> bool:
        return name in self.names

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a.categories) for a in self.attributes)


@dataclass(frozen=True)
class MarginalTable:
    schema: AttributeSchema
    counts: tuple[tuple[float, ...], ...]

    def total(self, i: int) -> float:
        return math.fsum(self.counts[i])


@dataclass(frozen=True)
class PopulationParams:
    persons: int
    household_sizes: tuple[float, ...]
    marginals: MarginalTable
    income_attribute: str = "income_band"
    employment_attribute: str = "employment"
    employed_category: str = "employed"
    ipf_tol: float = 1e-8
    ipf_max_iter: int = 1000

    @property
    def schema(self) -> AttributeSchema:
        return self.marginals.schema


@dataclass(frozen=True)
class LayerParams:
    k_mean: float
    weights: Mapping[str, float]
    influence: float = 1.0


@dataclass(frozen=True)
class NetworkParams:
    d_half_km: float
    adjacency_km: float
    layers: Mapping[str, LayerParams]
    candidates_per_person: int = 50


@dataclass(frozen=True)
class DemandParams:
    base_rate: float
    income_multipliers: Mapping[str, float]
    employment_multiplier: float = 0.0
    success_in_allocation: bool = True


@dataclass(frozen=True)
class MotiveRow:
    motive: str
    group: str
    stratum_attribute: str
    stratum_category: str
    importance_mean: float
    importance_sd: float


@dataclass(frozen=True)
class PriorRow:
    motive: str
    alternative: str
    eval_mean: float
    eval_sd: float


@dataclass(frozen=True)
class HumatParams:
    motives: tuple[MotiveRow, ...]
    priors: tuple[PriorRow, ...]
    dissonance_threshold: float = 0.5
    learning_rate: float = 0.3
    experience_step: float = 0.1
    persuasion_low: float = 0.0
    persuasion_high: float = 1.0
    max_rounds: int = 50


@dataclass(frozen=True)
class CrowdshippingParams:
    participation_rate: float = 0.05
    max_detour_km: float = 2.0
    trip_capacity: int = 2
    od_pattern: str = "depot"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_name: str
    day_count: int
    seed: int
    channels: tuple[str, ...]
    zones: tuple[Zone, ...]
    carriers: tuple[Carrier, ...]
    lockers: tuple[LockerSpec, ...]
    population: PopulationParams
    network: NetworkParams
    demand: DemandParams
    humat: HumatParams
    crowdshipping: CrowdshippingParams = field(default_factory=CrowdshippingParams)
    walk_max_km: float = 1.5
    freight_only_shares: Mapping[str, float] = field(default_factory=lambda: {HOME_COURIER: 1.0})

    @property
    def schema(self) -> AttributeSchema:
        return self.population.schema

    def zone(self, zone_id: str) -> Zone:
        for z in self.zones:
            if z.zone_id == zone_id:
                return z
        raise KeyError(zone_id)

    def zone_map(self) -> dict[str, Zone]:
        return {z.zone_id: z for z in self.zones}

    def with_overrides(self, **kwargs: Any) -> "ScenarioConfig":
        return replace(self, **kwargs)


# ---------------------------------------------------------------- loading


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """Accept a scenario directory, a scenario.toml path, or a bundled name."""
    p = Path(name_or_path)
    if p.is_dir():
        p = p / SCENARIO_FILE
    if p.is_file():
        return p
    bundled = BUNDLED_DIR / str(name_or_path) / SCENARIO_FILE
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"no scenario at {name_or_path}")


def bundled_scenarios() -> list[str]:
    return sorted(p.parent.name for p in BUNDLED_DIR.glob(f"*/{SCENARIO_FILE}"))


def _read_csv(path: Path, required: Iterable[str]) -> list[tuple[int, dict[str, str]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, None, f"cannot read table: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(path, 1, f"missing columns {missing}")
    rows = []
    for row in reader:
        if None in row or any(v is None for v in row.values()):
            raise ParseError(path, reader.line_num, "wrong number of fields")
        rows.append((reader.line_num, {k: v.strip() for k, v in row.items()}))
    return rows


def _num(path: Path, line: int, value: str, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise ParseError(path, line, f"not a valid {kind.__name__}: {value!r}") from None


def _get(d: Mapping[str, Any], key: str, where: str, default: Any = ..., kind: type | tuple = ()) -> Any:
    if key not in d:
        if default is ...:
            raise ValidationError(f"{where}.{key}", "required field missing")
        return default
    v = d[key]
    if kind:
        kinds = kind if isinstance(kind, tuple) else (kind,)
        # bool is an int subclass; reject it unless asked for
        if not isinstance(v, kinds) or (isinstance(v, bool) and bool not in kinds):
            names = "/".join(k.__name__ for k in kinds)
            raise ValidationError(f"{where}.{key}", f"expected {names}, got {type(v).__name__}")
    return v


_NUM = (int, float)


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file and its sibling tables."""
    path = resolve_scenario_path(path)
    base = path.parent
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ParseError(path, getattr(exc, "lineno", None), getattr(exc, "msg", str(exc))) from exc

    sc = _get(raw, "scenario", "", kind=dict)
    tables = _get(raw, "tables", "", default={}, kind=dict)

    def table(key: str, default: str | None) -> Path | None:
        name = tables.get(key, default)
        return None if name is None else base / name

    zones = _load_zones(table("zones", "zones.csv"))
    carriers = _load_carriers(table("carriers", "carriers.csv"))
    lockers_path = table("lockers", "lockers.csv")
    lockers = _load_lockers(lockers_path) if lockers_path.exists() else ()
    marginals = _load_marginals(table("marginals", "marginals.csv"))
    motives = _load_motives(table("motives", "motives.csv"))
    priors = _load_priors(table("priors", "priors.csv"))

    pop = _get(raw, "population", "", kind=dict)
    population = PopulationParams(
        persons=_get(pop, "persons", "population", kind=int),
        household_sizes=tuple(float(x) for x in _get(pop, "household_sizes", "population", kind=list)),
        marginals=marginals,
        income_attribute=_get(pop, "income_attribute", "population", "income_band", str),
        employment_attribute=_get(pop, "employment_attribute", "population", "employment", str),
        employed_category=_get(pop, "employed_category", "population", "employed", str),
        ipf_tol=float(_get(pop, "ipf_tol", "population", 1e-8, _NUM)),
        ipf_max_iter=_get(pop, "ipf_max_iter", "population", 1000, int),
    )

    net = _get(raw, "network", "", kind=dict)
    layers = {}
    for name in LAYERS:
        lay = _get(net, name, "network", kind=dict)
        weights = _get(lay, "weights", f"network.{name}", kind=dict)
        layers[name] = LayerParams(
            k_mean=float(_get(lay, "k_mean", f"network.{name}", kind=_NUM)),
            weights={str(k): float(v) for k, v in weights.items()},
            influence=float(_get(lay, "influence", f"network.{name}", 1.0, _NUM)),
        )
    network = NetworkParams(
        d_half_km=float(_get(net, "d_half_km", "network", kind=_NUM)),
        adjacency_km=float(_get(net, "adjacency_km", "network", kind=_NUM)),
        layers=layers,
        candidates_per_person=_get(net, "candidates_per_person", "network", 50, int),
    )

    dem = _get(raw, "demand", "", kind=dict)
    demand = DemandParams(
        base_rate=float(_get(dem, "base_rate", "demand", kind=_NUM)),
        income_multipliers={str(k): float(v) for k, v in _get(dem, "income_multipliers", "demand", kind=dict).items()},
        employment_multiplier=float(_get(dem, "employment_multiplier", "demand", 0.0, _NUM)),
        success_in_allocation=_get(dem, "success_in_allocation", "demand", True, bool),
    )

    hu = _get(raw, "humat", "", default={}, kind=dict)
    persuasion = _get(hu, "persuasion", "humat", [0.0, 1.0], list)
    if len(persuasion) != 2:
        raise ValidationError("humat.persuasion", "expected [low, high]")
    humat = HumatParams(
        motives=motives,
        priors=priors,
        dissonance_threshold=float(_get(hu, "dissonance_threshold", "humat", 0.5, _NUM)),
        learning_rate=float(_get(hu, "learning_rate", "humat", 0.3, _NUM)),
        experience_step=float(_get(hu, "experience_step", "humat", 0.1, _NUM)),
        persuasion_low=float(persuasion[0]),
        persuasion_high=float(persuasion[1]),
        max_rounds=_get(hu, "max_rounds", "humat", 50, int),
    )

    cs = _get(raw, "crowdshipping", "", default={}, kind=dict)
    crowd = CrowdshippingParams(
        participation_rate=float(_get(cs, "participation_rate", "crowdshipping", 0.05, _NUM)),
        max_detour_km=float(_get(cs, "max_detour_km", "crowdshipping", 2.0, _NUM)),
        trip_capacity=_get(cs, "trip_capacity", "crowdshipping", 2, int),
        od_pattern=_get(cs, "od_pattern", "crowdshipping", "depot", str),
    )
    lk = _get(raw, "lockers", "", default={}, kind=dict)
    fo = _get(raw, "freight_only", "", default={}, kind=dict)
    shares = _get(fo, "shares", "freight_only", {HOME_COURIER: 1.0}, dict)

    seed = _get(sc, "seed", "scenario", kind=int)
    cfg = ScenarioConfig(
        scenario_name=_get(sc, "name", "scenario", kind=str),
        day_count=_get(sc, "days", "scenario", kind=int),
        seed=seed,
        channels=tuple(_get(sc, "channels", "scenario", kind=list)),
        zones=zones,
        carriers=carriers,
        lockers=lockers,
        population=population,
        network=network,
        demand=demand,
        humat=humat,
        crowdshipping=crowd,
        walk_max_km=float(_get(lk, "walk_max_km", "lockers", 1.5, _NUM)),
        freight_only_shares={str(k): float(v) for k, v in shares.items()},
    )
    validate(cfg)
    return cfg


def _load_zones(path: Path) -> tuple[Zone, ...]:
    rows = _read_csv(path, ("zone_id", "lat", "lon", "population_weight"))
    return tuple(
        Zone(r["zone_id"], _num(path, ln, r["lat"]), _num(path, ln, r["lon"]), _num(path, ln, r["population_weight"]))
        for ln, r in rows
    )


def _load_carriers(path: Path) -> tuple[Carrier, ...]:
    rows = _read_csv(path, ("carrier_id", "market_share", "success_rate", "depot_zone", "vehicle_capacity"))
    return tuple(
        Carrier(
            r["carrier_id"],
            _num(path, ln, r["market_share"]),
            _num(path, ln, r["success_rate"]),
            r["depot_zone"],
            _num(path, ln, r["vehicle_capacity"], int),
        )
        for ln, r in rows
    )


def _load_lockers(path: Path) -> tuple[LockerSpec, ...]:
    rows = _read_csv(path, ("locker_id", "zone", "lat", "lon", "capacity", "availability_pattern"))
    return tuple(
        LockerSpec(
            r["locker_id"],
            r["zone"],
            _num(path, ln, r["lat"]),
            _num(path, ln, r["lon"]),
            _num(path, ln, r["capacity"], int),
            r["availability_pattern"],
        )
        for ln, r in rows
    )


def _load_marginals(path: Path) -> MarginalTable:
    rows = _read_csv(path, ("attribute", "category", "count"))
    order: dict[str, list[tuple[str, float]]] = {}
    for ln, r in rows:
        order.setdefault(r["attribute"], []).append((r["category"], _num(path, ln, r["count"])))
    schema = AttributeSchema(tuple(Attribute(a, tuple(c for c, _ in cs)) for a, cs in order.items()))
    counts = tuple(tuple(n for _, n in cs) for cs in order.values())
    return MarginalTable(schema, counts)


def _load_motives(path: Path) -> tuple[MotiveRow, ...]:
    cols = ("motive", "group", "stratum_attribute", "stratum_category", "importance_mean", "importance_sd")
    return tuple(
        MotiveRow(
            r["motive"],
            r["group"],
            r["stratum_attribute"],
            r["stratum_category"],
            _num(path, ln, r["importance_mean"]),
            _num(path, ln, r["importance_sd"]),
        )
        for ln, r in _read_csv(path, cols)
    )


def _load_priors(path: Path) -> tuple[PriorRow, ...]:
    cols = ("motive", "alternative", "eval_mean", "eval_sd")
    return tuple(
        PriorRow(r["motive"], r["alternative"], _num(path, ln, r["eval_mean"]), _num(path, ln, r["eval_sd"]))
        for ln, r in _read_csv(path, cols)
    )


# ---------------------------------------------------------------- validation


def _check(cond: bool, fld: str, msg: str) -> None:
    if not cond:
        raise ValidationError(fld, msg)


def beta_feasible(mean: float, sd: float, lo: float, hi: float) -> bool:
    """Whether a (scaled) beta with this mean/sd exists on [lo, hi]; sd == 0 is a point mass."""
    if not lo <= mean <= hi or sd < 0:
        return False
    if sd == 0:
        return True
    m = (mean - lo) / (hi - lo)
    v = (sd / (hi - lo)) ** 2
    return v < m * (1 - m)


def validate(cfg: ScenarioConfig) -> None:
    """Check every documented invariant; raises ValidationError naming the field."""
    _check(bool(cfg.scenario_name), "scenario.name", "must be nonempty")
    _check(cfg.day_count >= 1, "scenario.days", f"must be a positive integer, got {cfg.day_count}")
    _check(0 <= cfg.seed < 2**64, "scenario.seed", "must be a 64-bit unsigned integer")

    _check(len(cfg.channels) > 0, "scenario.channels", "channel catalog must be nonempty")
    for ch in cfg.channels:
        _check(ch in KNOWN_CHANNELS, "scenario.channels", f"unknown channel {ch!r}")
    _check(len(set(cfg.channels)) == len(cfg.channels), "scenario.channels", "duplicate channel")
    _check(HOME_COURIER in cfg.channels, "scenario.channels", "must contain home_courier (universal fallback)")

    _check(len(cfg.zones) > 0, "zones", "at least one zone required")
    ids = [z.zone_id for z in cfg.zones]
    _check(len(set(ids)) == len(ids), "zones.zone_id", "zone ids must be unique")
    for z in cfg.zones:
        _check(_valid_coords(z.lat, z.lon), f"zones[{z.zone_id}]", "coordinates out of range")
        _check(z.population_weight >= 0, f"zones[{z.zone_id}].population_weight", "must be >= 0")
    _check(sum(z.population_weight for z in cfg.zones) > 0, "zones.population_weight", "total weight must be > 0")
    zone_ids = set(ids)

    _check(len(cfg.carriers) > 0, "carriers", "at least one carrier required")
    cids = [c.carrier_id for c in cfg.carriers]
    _check(len(set(cids)) == len(cids), "carriers.carrier_id", "carrier ids must be unique")
    for c in cfg.carriers:
        _check(0.0 <= c.market_share <= 1.0, f"carriers[{c.carrier_id}].market_share", "must be in [0, 1]")
        _check(0.0 < c.success_rate <= 1.0, f"carriers[{c.carrier_id}].success_rate", "must be in (0, 1]")
        _check(c.depot_zone in zone_ids, f"carriers[{c.carrier_id}].depot_zone", f"unknown zone {c.depot_zone!r}")
        _check(c.vehicle_capacity >= 1, f"carriers[{c.carrier_id}].vehicle_capacity", "must be >= 1")
    share_sum = math.fsum(c.market_share for c in cfg.carriers)
    _check(abs(share_sum - 1.0) <= 1e-9, "carriers.market_share", f"market_share sum {share_sum:g} ≠ 1")

    lids = [lk.locker_id for lk in cfg.lockers]
    _check(len(set(lids)) == len(lids), "lockers.locker_id", "locker ids must be unique")
    for lk in cfg.lockers:
        _check(lk.capacity >= 1, f"lockers[{lk.locker_id}].capacity", "must be >= 1")
        _check(_valid_coords(lk.lat, lk.lon), f"lockers[{lk.locker_id}]", "coordinates out of range")
        _check(lk.zone in zone_ids, f"lockers[{lk.locker_id}].zone", f"unknown zone {lk.zone!r}")
        _check(
            len(lk.availability) > 0 and set(lk.availability) <= {"0", "1"},
            f"lockers[{lk.locker_id}].availability_pattern",
            "must be a nonempty string of 0/1",
        )

    _validate_population(cfg.population)
    _validate_network(cfg.network, cfg.schema)
    _validate_demand(cfg.demand, cfg.population)
    _validate_humat(cfg.humat, cfg.schema, cfg.channels)

    cs = cfg.crowdshipping
    _check(0.0 <= cs.participation_rate <= 1.0, "crowdshipping.participation_rate", "must be in [0, 1]")
    _check(cs.max_detour_km >= 0, "crowdshipping.max_detour_km", "must be >= 0")
    _check(cs.trip_capacity >= 1, "crowdshipping.trip_capacity", "must be >= 1")
    _check(cs.od_pattern in OD_PATTERNS, "crowdshipping.od_pattern", f"must be one of {OD_PATTERNS}")
    _check(cfg.walk_max_km >= 0, "lockers.walk_max_km", "must be >= 0")

    fo = cfg.freight_only_shares
    for ch, v in fo.items():
        _check(ch in cfg.channels, "freight_only.shares", f"channel {ch!r} not in catalog")
        _check(v >= 0, f"freight_only.shares.{ch}", "must be >= 0")
    _check(abs(math.fsum(fo.values()) - 1.0) <= 1e-9, "freight_only.shares", "shares must sum to 1")


def _validate_population(pop: PopulationParams) -> None:
    _check(pop.persons >= 0, "population.persons", "must be >= 0")
    _check(len(pop.household_sizes) > 0, "population.household_sizes", "must be nonempty")
    _check(all(p >= 0 for p in pop.household_sizes), "population.household_sizes", "probabilities must be >= 0")
    _check(sum(pop.household_sizes) > 0, "population.household_sizes", "must have positive mass")
    _check(pop.ipf_tol > 0, "population.ipf_tol", "must be > 0")
    _check(pop.ipf_max_iter >= 1, "population.ipf_max_iter", "must be >= 1")
    schema = pop.schema
    _check(len(schema.attributes) > 0, "marginals", "at least one attribute required")
    for attr, counts in zip(schema.attributes, pop.marginals.counts):
        _check(len(attr.categories) >= 2, f"marginals.{attr.name}", "needs at least 2 categories")
        _check(len(set(attr.categories)) == len(attr.categories), f"marginals.{attr.name}", "duplicate category")
        _check(all(c >= 0 for c in counts), f"marginals.{attr.name}", "counts must be >= 0")
    totals = [pop.marginals.total(i) for i in range(len(schema.attributes))]
    t0 = totals[0]
    _check(t0 > 0, "marginals", "population total must be > 0")
    for attr, t in zip(schema.attributes, totals):
        _check(abs(t - t0) <= 1e-6 * t0, f"marginals.{attr.name}", f"total {t:g} differs from {t0:g}")
    for name, fld in ((pop.income_attribute, "income_attribute"), (pop.employment_attribute, "employment_attribute")):
        _check(name in schema, f"population.{fld}", f"attribute {name!r} not in marginals")
    _check(
        pop.employed_category in schema[pop.employment_attribute].categories,
        "population.employed_category",
        f"{pop.employed_category!r} is not a category of {pop.employment_attribute}",
    )


def _validate_network(net: NetworkParams, schema: AttributeSchema) -> None:
    _check(net.d_half_km > 0, "network.d_half_km", "must be > 0")
    _check(net.adjacency_km >= 0, "network.adjacency_km", "must be >= 0")
    _check(net.candidates_per_person >= 1, "network.candidates_per_person", "must be >= 1")
    for name in LAYERS:
        _check(name in net.layers, f"network.{name}", "layer missing")
        lay = net.layers[name]
        _check(lay.k_mean >= 0, f"network.{name}.k_mean", "must be >= 0")
        _check(lay.influence >= 0, f"network.{name}.influence", "must be >= 0")
        for k, v in lay.weights.items():
            _check(k == "spatial" or k in schema, f"network.{name}.weights.{k}", "unknown attribute")
            _check(v >= 0, f"network.{name}.weights.{k}", "must be >= 0")
        _check(any(v > 0 for v in lay.weights.values()), f"network.{name}.weights", "at least one weight must be > 0")


def _validate_demand(dem: DemandParams, pop: PopulationParams) -> None:
    _check(dem.base_rate >= 0, "demand.base_rate", "must be >= 0")
    _check(dem.employment_multiplier >= 0, "demand.employment_multiplier", "must be >= 0")
    bands = pop.schema[pop.income_attribute].categories
    for band in bands:
        _check(band in dem.income_multipliers, f"demand.income_multipliers.{band}", "missing income band")
    for k, v in dem.income_multipliers.items():
        _check(k in bands, f"demand.income_multipliers.{k}", "unknown income band")
        _check(v >= 0, f"demand.income_multipliers.{k}", "must be >= 0")


def _validate_humat(hu: HumatParams, schema: AttributeSchema, channels: tuple[str, ...]) -> None:
    _check(0 <= hu.dissonance_threshold <= 1, "humat.dissonance_threshold", "must be in [0, 1]")
    _check(0 < hu.learning_rate <= 1, "humat.learning_rate", "must be in (0, 1]")
    _check(0 <= hu.experience_step <= 1, "humat.experience_step", "must be in [0, 1]")
    _check(0 <= hu.persuasion_low <= hu.persuasion_high <= 1, "humat.persuasion", "need 0 <= low <= high <= 1")
    _check(hu.max_rounds >= 1, "humat.max_rounds", "must be >= 1")
    groups: dict[str, str] = {}
    for m in hu.motives:
        _check(m.group in MOTIVE_GROUPS, f"motives.{m.motive}.group", f"must be one of {MOTIVE_GROUPS}")
        _check(groups.setdefault(m.motive, m.group) == m.group, f"motives.{m.motive}.group", "inconsistent group")
        if m.stratum_attribute != "all":
            _check(m.stratum_attribute in schema, f"motives.{m.motive}.stratum_attribute", "unknown attribute")
            _check(
                m.stratum_category in schema[m.stratum_attribute].categories,
                f"motives.{m.motive}.stratum_category",
                f"unknown category {m.stratum_category!r}",
            )
        _check(
            beta_feasible(m.importance_mean, m.importance_sd, 0.0, 1.0),
            f"motives.{m.motive}.importance",
            "mean must be in [0, 1] with sd^2 < mean(1-mean)",
        )
    for g in MOTIVE_GROUPS:
        _check(g in groups.values(), "motives", f"no motive in group {g!r}")
    seen = set()
    for p in hu.priors:
        _check(p.motive in groups, f"priors.{p.motive}", "unknown motive")
        _check(p.alternative in KNOWN_CHANNELS, f"priors.{p.motive}.{p.alternative}", "unknown alternative")
        _check(
            beta_feasible(p.eval_mean, p.eval_sd, -1.0, 1.0),
            f"priors.{p.motive}.{p.alternative}",
            "mean must be in [-1, 1] with a feasible sd",
        )
        seen.add((p.motive, p.alternative))
    for motive in groups:
        for ch in channels:
            _check((motive, ch) in seen, f"priors.{motive}.{ch}", "missing prior for catalog alternative")


# ---------------------------------------------------------------- serialization


def _write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def dump_scenario(cfg: ScenarioConfig, directory: str | Path) -> Path:
    """Write ``cfg`` as scenario.toml plus CSV tables; returns the toml path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "zones.csv", ["zone_id", "lat", "lon", "population_weight"],
               ((z.zone_id, z.lat, z.lon, z.population_weight) for z in cfg.zones))
    _write_csv(d / "carriers.csv", ["carrier_id", "market_share", "success_rate", "depot_zone", "vehicle_capacity"],
               ((c.carrier_id, c.market_share, c.success_rate, c.depot_zone, c.vehicle_capacity) for c in cfg.carriers))
    _write_csv(d / "lockers.csv", ["locker_id", "zone", "lat", "lon", "capacity", "availability_pattern"],
               ((lk.locker_id, lk.zone, lk.lat, lk.lon, lk.capacity, lk.availability) for lk in cfg.lockers))
    m = cfg.population.marginals
    _write_csv(d / "marginals.csv", ["attribute", "category", "count"],
               ((a.name, c, n) for a, counts in zip(m.schema.attributes, m.counts) for c, n in zip(a.categories, counts)))
    _write_csv(d / "motives.csv",
               ["motive", "group", "stratum_attribute", "stratum_category", "importance_mean", "importance_sd"],
               ((r.motive, r.group, r.stratum_attribute, r.stratum_category, r.importance_mean, r.importance_sd)
                for r in cfg.humat.motives))
    _write_csv(d / "priors.csv", ["motive", "alternative", "eval_mean", "eval_sd"],
               ((r.motive, r.alternative, r.eval_mean, r.eval_sd) for r in cfg.humat.priors))

    pop, net, dem, hu, cs = cfg.population, cfg.network, cfg.demand, cfg.humat, cfg.crowdshipping
    doc = {
        "scenario": {"name": cfg.scenario_name, "days": cfg.day_count, "seed": cfg.seed, "channels": list(cfg.channels)},
        "population": {
            "persons": pop.persons,
            "household_sizes": list(pop.household_sizes),
            "income_attribute": pop.income_attribute,
            "employment_attribute": pop.employment_attribute,
            "employed_category": pop.employed_category,
            "ipf_tol": pop.ipf_tol,
            "ipf_max_iter": pop.ipf_max_iter,
        },
        "network": {
            "d_half_km": net.d_half_km,
            "adjacency_km": net.adjacency_km,
            "candidates_per_person": net.candidates_per_person,
            **{
                name: {"k_mean": lay.k_mean, "influence": lay.influence, "weights": dict(lay.weights)}
                for name, lay in net.layers.items()
            },
        },
        "demand": {
            "base_rate": dem.base_rate,
            "employment_multiplier": dem.employment_multiplier,
            "success_in_allocation": dem.success_in_allocation,
            "income_multipliers": dict(dem.income_multipliers),
        },
        "humat": {
            "dissonance_threshold": hu.dissonance_threshold,
            "learning_rate": hu.learning_rate,
            "experience_step": hu.experience_step,
            "persuasion": [hu.persuasion_low, hu.persuasion_high],
            "max_rounds": hu.max_rounds,
        },
        "crowdshipping": {
            "participation_rate": cs.participation_rate,
            "max_detour_km": cs.max_detour_km,
            "trip_capacity": cs.trip_capacity,
            "od_pattern": cs.od_pattern,
        },
        "lockers": {"walk_max_km": cfg.walk_max_km},
        "freight_only": {"shares": dict(cfg.freight_only_shares)},
    }
    out = d / SCENARIO_FILE
    out.write_text(tomli_w.dumps(doc), encoding="utf-8")
    return out
