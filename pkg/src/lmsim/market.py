"""Channel choice, crowdshipping matching and locker assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .demand import Parcel
from .errors import MissingAgent
from .scenario import CROWDSHIPPING, HOME_COURIER, PARCEL_LOCKER, Carrier, LockerSpec, Zone, great_circle_km
from .streams import RandomStream

Coords = tuple[float, float]


@dataclass(frozen=True)
class CrowdshipperTrip:
    trip_id: int
    person_id: int
    day: int
    origin_zone: str
    destination_zone: str
    max_detour_km: float
    capacity: int


@dataclass
class LockerState:
    locker: LockerSpec
    day: int
    remaining: int
    available: bool

    @classmethod
    def for_day(cls, locker: LockerSpec, day: int) -> "LockerState":
        return cls(locker, day, locker.capacity, locker.available_on(day))

    def take(self) -> None:
        if self.remaining <= 0:
            raise RuntimeError(f"locker {self.locker.locker_id} is full on day {self.day}")
        self.remaining -= 1


@dataclass(frozen=True)
class ChannelAssignment:
    parcel_id: int
    channel: str
    detail: str | None = None  # trip id for crowdshipping, locker id for lockers
    fallback: bool = False
    distance_km: float | None = None  # detour (crowdshipping) or walking distance (locker)


# ---------------------------------------------------------------- channel split


def channel_split(parcels: Sequence[Parcel], decision_makers: Mapping[int, object]) -> list[Parcel]:
    """Tag each parcel with the current choice of its household's decision maker."""
    for p in parcels:
        agent = decision_makers.get(p.household_id)
        if agent is None:
            raise MissingAgent(p.household_id)
        p.preferred_channel = agent.choice
    return list(parcels)


def channel_split_fixed(
    parcels: Sequence[Parcel], shares: Mapping[str, float], channels: Sequence[str], rng: RandomStream
) -> list[Parcel]:
    """Freight-only mode: draw each parcel's channel from a fixed share vector."""
    if not parcels:
        return list(parcels)
    weights = [shares.get(ch, 0.0) for ch in channels]
    for p, k in zip(parcels, rng.categorical(weights, len(parcels)).tolist()):
        p.preferred_channel = channels[k]
    return list(parcels)


# ---------------------------------------------------------------- crowdshipping


def od_weights(pattern: str, zones: Sequence[Zone], carriers: Sequence[Carrier]) -> dict[str, float]:
    """Trip destination weights: towards carrier depots ("depot") or by population ("population")."""
    if pattern == "depot":
        w = {z.zone_id: 0.0 for z in zones}
        for c in carriers:
            w[c.depot_zone] += c.market_share
        return w
    if pattern == "population":
        return {z.zone_id: z.population_weight for z in zones}
    raise ValueError(f"unknown od pattern {pattern!r}")


def generate_crowdshipper_trips(
    persons: Sequence,
    participation_rate: float,
    od_pattern: Mapping[str, float],
    day: int,
    rng: RandomStream,
    max_detour_km: float = 2.0,
    capacity: int = 2,
    first_id: int = 0,
) -> list[CrowdshipperTrip]:
    """One trip per participating person, from the home zone to a drawn destination.

    ``persons`` should already be restricted to the employed.  The origin
    zone is excluded from the destination draw; a person with no other
    reachable zone makes no trip.
    """
    if not 0.0 <= participation_rate <= 1.0:
        raise ValueError("participation_rate must be in [0, 1]")
    people = sorted(persons, key=lambda p: p.person_id)
    if not people:
        return []
    joins = rng.random(len(people)) < participation_rate
    zone_ids = list(od_pattern)
    base = np.array([od_pattern[z] for z in zone_ids], dtype=float)
    trips = []
    tid = first_id
    for person, joined in zip(people, joins.tolist()):
        if not joined:
            continue
        w = base.copy()
        w[zone_ids.index(person.zone_id)] = 0.0
        u = float(rng.random())
        if w.sum() <= 0:
            continue
        cdf = np.cumsum(w / w.sum())
        k = min(int(np.searchsorted(cdf, u, side="right")), len(zone_ids) - 1)
        while w[k] == 0:
            k -= 1
        trips.append(CrowdshipperTrip(tid, person.person_id, day, person.zone_id, zone_ids[k], max_detour_km, capacity))
        tid += 1
    return trips


def detour_km(origin: Coords, depot: Coords, dest: Coords, trip_end: Coords) -> float:
    """Extra distance of origin -> depot -> parcel destination -> trip end over the direct trip."""
    extra = (
        great_circle_km(origin, depot)
        + great_circle_km(depot, dest)
        + great_circle_km(dest, trip_end)
        - great_circle_km(origin, trip_end)
    )
    return max(0.0, extra)


def match_crowdshipping(
    parcels: Sequence[Parcel],
    trips: Sequence[CrowdshipperTrip],
    depots: Mapping[str, Coords],
    zone_coords: Mapping[str, Coords],
) -> tuple[list[ChannelAssignment], list[Parcel]]:
    """Greedy matching in ascending parcel id; each parcel takes the feasible trip with least detour.

    A trip is feasible while it has capacity left and the detour stays within
    its ``max_detour_km``.  Ties go to the lower trip id.
    """
    remaining = {t.trip_id: t.capacity for t in trips}
    ordered_trips = sorted(trips, key=lambda t: t.trip_id)
    matched, unmatched = [], []
    for p in sorted(parcels, key=lambda p: p.parcel_id):
        depot = depots[p.carrier_id]
        dest = zone_coords[p.zone_id]
        best = None
        for t in ordered_trips:
            if remaining[t.trip_id] <= 0:
                continue
            d = detour_km(zone_coords[t.origin_zone], depot, dest, zone_coords[t.destination_zone])
            if d <= t.max_detour_km + 1e-9 and (best is None or d < best[1]):
                best = (t, d)
        if best is None:
            unmatched.append(p)
            continue
        t, d = best
        remaining[t.trip_id] -= 1
        assert remaining[t.trip_id] >= 0
        matched.append(ChannelAssignment(p.parcel_id, CROWDSHIPPING, str(t.trip_id), False, d))
    return matched, unmatched


# ---------------------------------------------------------------- lockers


def assign_lockers(
    parcels: Sequence[Parcel],
    locker_states: Sequence[LockerState],
    zone_coords: Mapping[str, Coords],
    walk_max_km: float,
    day: int | None = None,
) -> tuple[list[ChannelAssignment], list[Parcel]]:
    """Nearest open locker with room within ``walk_max_km`` of the destination zone centroid."""
    states = sorted(locker_states, key=lambda s: s.locker.locker_id)
    if day is not None:
        for s in states:
            if s.day != day:
                raise ValueError(f"locker state for day {s.day} used on day {day}")
    assigned, unassigned = [], []
    for p in sorted(parcels, key=lambda p: p.parcel_id):
        dest = zone_coords[p.zone_id]
        best = None
        for s in states:
            if not s.available or s.remaining <= 0:
                continue
            d = great_circle_km(dest, s.locker.coords)
            if d <= walk_max_km and (best is None or d < best[1]):
                best = (s, d)
        if best is None:
            unassigned.append(p)
            continue
        s, d = best
        s.take()
        assigned.append(ChannelAssignment(p.parcel_id, PARCEL_LOCKER, s.locker.locker_id, False, d))
    return assigned, unassigned


def fallback(parcels: Sequence[Parcel]) -> list[ChannelAssignment]:
    return [ChannelAssignment(p.parcel_id, HOME_COURIER, None, True) for p in parcels]


# ---------------------------------------------------------------- KPIs


@dataclass(frozen=True)
class ChannelKpi:
    day: int
    channel: str
    tagged: int
    served: int
    fallback: int
    detour_km: float = 0.0
    locker_capacity: int = 0
    utilization: float = 0.0


def market_kpis(
    assignments: Sequence[ChannelAssignment],
    preferred: Mapping[int, str],
    channels: Sequence[str],
    locker_states: Sequence[LockerState] = (),
    day: int = 0,
) -> list[ChannelKpi]:
    """Per preferred channel: parcels tagged, served by it, and rerouted to the courier.

    Crowdshipping carries the summed detour ("extra trip" km); lockers carry
    capacity utilization = assigned / capacity of lockers open that day.
    """
    rows = []
    for ch in channels:
        mine = [a for a in assignments if preferred[a.parcel_id] == ch]
        served = [a for a in mine if not a.fallback]
        fb = len(mine) - len(served)
        detour = math.fsum(a.distance_km or 0.0 for a in served) if ch == CROWDSHIPPING else 0.0
        cap = 0
        util = 0.0
        if ch == PARCEL_LOCKER:
            cap = sum(s.locker.capacity for s in locker_states if s.available)
            util = len(served) / cap if cap else 0.0
        rows.append(ChannelKpi(day, ch, len(mine), len(served), fb, detour, cap, util))
    return rows
