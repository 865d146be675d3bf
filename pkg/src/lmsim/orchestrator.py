"""Two-phase run: build the population, networks and agents, then simulate days.

Setup:  population -> networks -> agents -> initial KPIs -> preference calibration.
Each day: demand -> carriers -> channel choice -> crowdshipping / lockers ->
courier tours -> delivery outcomes -> agent experience -> one diffusion round.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import shutil
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .demand import Parcel, allocate_carriers, demand_kpis, generate_demand
from .errors import LmsimError, MissingArtifact, PhaseError, ValidationError
from .humat import HumatAgent, agents_from_params, apply_experience, choice_shares, diffusion_round, run_diffusion
from .market import (
    ChannelAssignment,
    LockerState,
    assign_lockers,
    channel_split,
    channel_split_fixed,
    fallback,
    generate_crowdshipper_trips,
    market_kpis,
    match_crowdshipping,
    od_weights,
)
from .popsynth import Population, read_persons_csv, synthesize, write_households_csv, write_persons_csv
from .scenario import CROWDSHIPPING, HOME_COURIER, PARCEL_LOCKER, ScenarioConfig
from .scheduling import Tour, build_tours, scheduling_kpis, simulate_delivery
from .socnet import SocialNetwork, build_network, write_network_csv
from .streams import RandomStream

log = logging.getLogger(__name__)

MODULES = (
    "scenario-core", "popsynth", "socnet", "humat",
    "parcel-demand", "parcel-market", "parcel-scheduling", "orchestrator-cli",
)


def fmt(x: float) -> str:
    """Stable text for floats in every output table."""
    v = round(float(x), 9)
    return repr(v + 0.0)  # + 0.0 folds -0.0 into 0.0


@dataclass(frozen=True)
class DeliveryOutcome:
    parcel_id: int
    household_id: int
    channel: str
    success: bool
    locker_distance_km: float | None = None


@dataclass
class SetupArtifacts:
    config: ScenarioConfig
    root: RandomStream
    population: Population
    network: SocialNetwork | None
    agents: list[HumatAgent]
    decision_makers: dict[int, HumatAgent]
    freight_only: bool
    diffusion: tuple[int, bool] | None
    humat_rows: list[list[Any]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class ExecutionResult:
    parcels: list[Parcel]
    assignments: list[tuple[int, ChannelAssignment]]
    tours: list[Tour]
    market_rows: list[Any]
    trips: int
    humat_rows: list[list[Any]]
    timings: dict[str, float]


# ---------------------------------------------------------------- setup


def _phase(phase: str, module: str):
    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, et, exc, tb):
            if exc is not None and isinstance(exc, Exception) and not isinstance(exc, PhaseError):
                raise PhaseError(phase, module, exc) from exc
            return False

    return _Guard()


def check_consistency(cfg: ScenarioConfig) -> None:
    if PARCEL_LOCKER in cfg.channels and not cfg.lockers:
        raise ValidationError("lockers", "channel catalog offers parcel_locker but the scenario defines no lockers")


def _humat_snapshot(agents: Sequence[HumatAgent], cfg: ScenarioConfig, phase: str, day: int) -> list[list[Any]]:
    order = {a.name: a.categories for a in cfg.schema.attributes}
    rows = []
    for grouping in ("all", *cfg.schema.names):
        for kpi in choice_shares(agents, grouping, order):
            for alt in agents[0].alternatives:
                rows.append([phase, day, grouping, kpi.subgroup, kpi.n_agents, alt,
                             fmt(kpi.shares[alt]), fmt(kpi.mean_satisfaction[alt])])
    return rows


def setup_phase(
    cfg: ScenarioConfig,
    freight_only: bool = False,
    population_csv: str | Path | None = None,
) -> SetupArtifacts:
    check_consistency(cfg)
    root = RandomStream(cfg.seed, "lmsim")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    with _phase("setup", "popsynth"):
        if population_csv is not None:
            pop = read_persons_csv(
                population_csv, cfg.schema, [z.zone_id for z in cfg.zones],
                cfg.population.income_attribute, cfg.population.employment_attribute,
                cfg.population.employed_category,
            )
        else:
            pop = synthesize(cfg.population, cfg.zones, root.derive("popsynth"))
    timings["popsynth"] = time.perf_counter() - t0
    log.info("population: %d persons in %d households", len(pop.persons), len(pop.households))

    if freight_only:
        return SetupArtifacts(cfg, root, pop, None, [], {}, True, None, [], timings)

    t0 = time.perf_counter()
    with _phase("setup", "socnet"):
        network = build_network(pop, cfg.zones, cfg.network, root.derive("socnet"))
    timings["socnet"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    hu = cfg.humat
    with _phase("setup", "humat"):
        agents = agents_from_params(pop, hu, cfg.channels, root.derive("humat"))
        rows = _humat_snapshot(agents, cfg, "initial", 0) if agents else []
        diffusion = run_diffusion(agents, network, hu.max_rounds, None, hu.dissonance_threshold, hu.learning_rate)
        if agents:
            rows += _humat_snapshot(agents, cfg, "calibrated", 0)
    timings["humat"] = time.perf_counter() - t0
    log.info("calibration diffusion: %d rounds, converged=%s", *diffusion)

    by_id = {a.person_id: a for a in agents}
    dms = {h.household_id: by_id[h.decision_maker] for h in pop.households}
    return SetupArtifacts(cfg, root, pop, network, agents, dms, False, diffusion, rows, timings)


# ---------------------------------------------------------------- execution


def execute_phase(setup: SetupArtifacts, day_count: int) -> ExecutionResult:
    cfg = setup.config
    pop = setup.population
    zone_coords = {z.zone_id: z.coords for z in cfg.zones}
    depots = {c.carrier_id: zone_coords[c.depot_zone] for c in cfg.carriers}
    employed = pop.employed()
    od = od_weights(cfg.crowdshipping.od_pattern, cfg.zones, cfg.carriers)
    hu = cfg.humat
    timings: dict[str, float] = defaultdict(float)

    all_parcels: list[Parcel] = []
    all_assignments: list[tuple[int, ChannelAssignment]] = []
    all_tours: list[Tour] = []
    market_rows = []
    humat_rows: list[list[Any]] = []
    next_parcel = next_tour = next_trip = 0

    for day in range(1, day_count + 1):
        s = setup.root.derive(f"day{day}")

        t0 = time.perf_counter()
        with _phase("execute", "parcel-demand"):
            parcels = generate_demand(pop.households, cfg.demand, day, s.derive("demand"), next_parcel)
            next_parcel += len(parcels)
            allocate_carriers(parcels, cfg.carriers, s.derive("allocate"), cfg.demand.success_in_allocation)
        timings["parcel-demand"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        with _phase("execute", "parcel-market"):
            if setup.freight_only:
                channel_split_fixed(parcels, cfg.freight_only_shares, cfg.channels, s.derive("split"))
            else:
                channel_split(parcels, setup.decision_makers)
            tagged = defaultdict(list)
            for p in parcels:
                tagged[p.preferred_channel].append(p)

            assignments: list[ChannelAssignment] = [ChannelAssignment(p.parcel_id, HOME_COURIER) for p in tagged[HOME_COURIER]]
            n_trips = 0
            if CROWDSHIPPING in cfg.channels:
                cs = cfg.crowdshipping
                trips = generate_crowdshipper_trips(
                    employed, cs.participation_rate, od, day, s.derive("trips"),
                    cs.max_detour_km, cs.trip_capacity, next_trip,
                )
                next_trip += len(trips)
                n_trips = len(trips)
                matched, unmatched = match_crowdshipping(tagged[CROWDSHIPPING], trips, depots, zone_coords)
                assignments += matched + fallback(unmatched)
            states = [LockerState.for_day(lk, day) for lk in cfg.lockers]
            if PARCEL_LOCKER in cfg.channels:
                placed, unplaced = assign_lockers(tagged[PARCEL_LOCKER], states, zone_coords, cfg.walk_max_km, day)
                assignments += placed + fallback(unplaced)
            assignments.sort(key=lambda a: a.parcel_id)
            if len(assignments) != len(parcels):
                raise RuntimeError(f"day {day}: {len(parcels)} parcels but {len(assignments)} channel assignments")
            by_parcel = {p.parcel_id: p for p in parcels}
            for a in assignments:
                by_parcel[a.parcel_id].channel = a.channel
            preferred = {p.parcel_id: p.preferred_channel for p in parcels}
            market_rows += market_kpis(assignments, preferred, cfg.channels, states, day)
        timings["parcel-market"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        with _phase("execute", "parcel-scheduling"):
            courier = [p for p in parcels if p.channel == HOME_COURIER]
            tours = build_tours(courier, cfg.carriers, zone_coords, day, next_tour)
            next_tour += len(tours)
            for p in parcels:
                p.advance("scheduled")
            results = dict(simulate_delivery(tours, cfg.carriers, s.derive("delivery"), cfg.demand.success_in_allocation))
            outcomes = []
            for a in assignments:
                p = by_parcel[a.parcel_id]
                ok = results[a.parcel_id] if a.channel == HOME_COURIER else True
                p.advance("delivered" if ok else "failed")
                dist = a.distance_km if a.channel == PARCEL_LOCKER else None
                outcomes.append(DeliveryOutcome(p.parcel_id, p.household_id, a.channel, ok, dist))
        timings["parcel-scheduling"] += time.perf_counter() - t0

        if not setup.freight_only:
            t0 = time.perf_counter()
            with _phase("execute", "humat"):
                for o in outcomes:
                    apply_experience(setup.decision_makers[o.household_id], o, hu.experience_step, cfg.walk_max_km)
                diffusion_round(setup.agents, setup.network, None, hu.dissonance_threshold, hu.learning_rate)
                if setup.agents:
                    humat_rows += _humat_snapshot(setup.agents, cfg, "day", day)
            timings["humat"] += time.perf_counter() - t0

        all_parcels += parcels
        all_assignments += [(day, a) for a in assignments]
        all_tours += tours
        log.info("day %d: %d parcels, %d tours, %d crowdshipper trips", day, len(parcels), len(tours), n_trips)

    return ExecutionResult(all_parcels, all_assignments, all_tours, market_rows, next_trip, humat_rows, dict(timings))


# ---------------------------------------------------------------- output


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(out: Path, setup: SetupArtifacts, result: ExecutionResult, day_count: int, export_network: bool) -> None:
    cfg = setup.config
    write_persons_csv(out / "persons.csv", setup.population)
    write_households_csv(out / "households.csv", setup.population)
    if export_network and setup.network is not None:
        write_network_csv(out / "network.csv", setup.network)

    _write_rows(
        out / "parcels.csv",
        ["parcel_id", "day", "household", "zone", "carrier", "channel", "status", "preferred_channel"],
        ([p.parcel_id, p.day, p.household_id, p.zone_id, p.carrier_id, p.channel, p.status, p.preferred_channel]
         for p in result.parcels),
    )
    _write_rows(
        out / "assignments.csv",
        ["parcel_id", "channel", "detail", "fallback", "day", "distance_km"],
        ([a.parcel_id, a.channel, a.detail or "", str(a.fallback).lower(), day,
          "" if a.distance_km is None else fmt(a.distance_km)] for day, a in result.assignments),
    )
    tour_rows = []
    for t in result.tours:
        legs = t.legs()
        for k, (stop, leg) in enumerate(zip(t.stops, legs), start=1):
            tour_rows.append([t.tour_id, t.carrier_id, t.day, k, stop.zone_id, ";".join(map(str, stop.parcel_ids)), fmt(leg)])
        tour_rows.append([t.tour_id, t.carrier_id, t.day, len(t.stops) + 1, t.depot_zone, "", fmt(legs[-1])])
    _write_rows(out / "tours.csv", ["tour_id", "carrier", "day", "stop_seq", "zone", "parcels", "leg_km"], tour_rows)

    days = list(range(1, day_count + 1))
    dk = demand_kpis(result.parcels, days, [z.zone_id for z in cfg.zones], [c.carrier_id for c in cfg.carriers])
    _write_rows(out / "demand_kpis.csv", ["dimension", "key", "count"], dk.rows())
    _write_rows(
        out / "market_kpis.csv",
        ["day", "channel", "tagged", "served", "fallback", "detour_km", "locker_capacity", "utilization"],
        ([r.day, r.channel, r.tagged, r.served, r.fallback, fmt(r.detour_km), r.locker_capacity, fmt(r.utilization)]
         for r in result.market_rows),
    )
    sk = scheduling_kpis(result.tours, [c.carrier_id for c in cfg.carriers], days)
    _write_rows(
        out / "scheduling_kpis.csv",
        ["day", "carrier", "tours", "total_km", "parcels", "mean_parcels_per_tour", "failures"],
        ([r.day, r.carrier_id, r.tours, fmt(r.total_km), r.parcels, fmt(r.mean_parcels_per_tour), r.failures]
         for r in sk),
    )
    if not setup.freight_only:
        _write_rows(
            out / "humat_kpis.csv",
            ["phase", "day", "grouping", "subgroup", "n_agents", "alternative", "share", "mean_satisfaction"],
            setup.humat_rows + result.humat_rows,
        )


def run(
    cfg: ScenarioConfig,
    out_dir: str | Path,
    seed: int | None = None,
    days: int | None = None,
    freight_only: bool = False,
    export_network: bool = False,
    population_csv: str | Path | None = None,
) -> dict:
    """Run setup and execution and write the output tree atomically; returns the manifest."""
    if seed is not None:
        cfg = cfg.with_overrides(seed=int(seed))
    day_count = cfg.day_count if days is None else int(days)
    if day_count < 0:
        raise ValidationError("days", "must be >= 0")
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not (out / "manifest.json").exists():
        raise LmsimError(f"{out} exists, is not empty and is not a previous run directory")

    setup = setup_phase(cfg, freight_only, population_csv)
    result = execute_phase(setup, day_count)

    tmp = out.parent / f".{out.name}.tmp-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        write_outputs(tmp, setup, result, day_count, export_network)
        files = {p.name: sha256_file(p) for p in sorted(tmp.iterdir())}
        manifest = {
            "scenario": cfg.scenario_name,
            "seed": cfg.seed,
            "days": day_count,
            "freight_only": freight_only,
            "population_source": "csv" if population_csv is not None else "synthesized",
            "module_versions": {m: __version__ for m in MODULES} | {"numpy": np.__version__},
            "calibration": None if setup.diffusion is None else {
                "rounds": setup.diffusion[0], "converged": setup.diffusion[1]},
            "crowdshipper_trips": result.trips,
            "files": files,
            "timings_s": {k: round(v, 4) for k, v in {**setup.timings, **result.timings}.items()},
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    tmp.rename(out)
    return manifest


def synth(cfg: ScenarioConfig, out_dir: str | Path, seed: int | None = None) -> Population:
    if seed is not None:
        cfg = cfg.with_overrides(seed=int(seed))
    pop = synthesize(cfg.population, cfg.zones, RandomStream(cfg.seed, "lmsim").derive("popsynth"))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_persons_csv(out / "persons.csv", pop)
    write_households_csv(out / "households.csv", pop)
    return pop


# ---------------------------------------------------------------- report


def _cell(text: str) -> Any:
    """CSV text to a JSON value whose serialisation reproduces the text."""
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        return text
    return v if math.isfinite(v) and repr(v) == text else text


def read_table(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        raise MissingArtifact(str(path))
    with path.open(encoding="utf-8", newline="") as fh:
        return [{k: _cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def report(run_dir: str | Path) -> dict:
    """Join demand, market, scheduling and agent KPIs into ``summary.json``."""
    d = Path(run_dir)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise MissingArtifact(f"{mpath} not found")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    for name, digest in manifest["files"].items():
        if not (d / name).exists():
            raise MissingArtifact(str(d / name))
        if sha256_file(d / name) != digest:
            raise LmsimError(f"{name} does not match its manifest checksum")

    parcels = read_table(d / "parcels.csv")
    demand = read_table(d / "demand_kpis.csv")
    market = read_table(d / "market_kpis.csv")
    sched = read_table(d / "scheduling_kpis.csv")
    humat = read_table(d / "humat_kpis.csv") if (d / "humat_kpis.csv").exists() else []

    status = defaultdict(int)
    channel = defaultdict(int)
    for p in parcels:
        status[p["status"]] += 1
        channel[p["channel"]] += 1
    by_channel = defaultdict(lambda: {"tagged": 0, "served": 0, "fallback": 0})
    for r in market:
        for k in ("tagged", "served", "fallback"):
            by_channel[r["channel"]][k] += r[k]
    final_day = max((r["day"] for r in humat), default=0)
    final_phase = "day" if any(r["phase"] == "day" for r in humat) else "calibrated"
    final_shares = {
        r["alternative"]: r["share"] for r in humat
        if r["phase"] == final_phase and r["day"] == final_day and r["grouping"] == "all"
    }
    summary = {
        "scenario": manifest["scenario"],
        "seed": manifest["seed"],
        "days": manifest["days"],
        "totals": {
            "parcels_created": len(parcels),
            "parcels_delivered": status.get("delivered", 0),
            "parcels_failed": status.get("failed", 0),
            "parcels_per_channel": dict(sorted(channel.items())),
            "market": {k: by_channel[k] for k in sorted(by_channel)},
            "tours": sum(r["tours"] for r in sched),
            "tour_km": float(fmt(math.fsum(float(r["total_km"]) for r in sched))),
            "crowdshipping_detour_km": float(fmt(math.fsum(float(r["detour_km"]) for r in market))),
            "final_choice_shares": final_shares,
        },
        "demand_kpis": demand,
        "market_kpis": market,
        "scheduling_kpis": sched,
        "humat_kpis": humat,
    }
    (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
