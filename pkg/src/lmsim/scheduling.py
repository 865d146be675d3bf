"""Courier tours: nearest-neighbour construction, 2-opt improvement, delivery outcomes."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .demand import Parcel
from .scenario import Carrier, great_circle_km
from .streams import RandomStream

Coords = tuple[float, float]

IMPROVE_TOL = 1e-9


@dataclass(frozen=True)
class Stop:
    zone_id: str
    coords: Coords
    parcel_ids: tuple[int, ...]


@dataclass
class Tour:
    tour_id: int
    carrier_id: str
    day: int
    depot_zone: str
    depot: Coords
    stops: list[Stop]
    total_distance_km: float = 0.0
    outcomes: dict[int, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.total_distance_km:
            self.total_distance_km = route_length(self.depot, [s.coords for s in self.stops])

    @property
    def parcel_count(self) -> int:
        return sum(len(s.parcel_ids) for s in self.stops)

    @property
    def parcel_ids(self) -> list[int]:
        return [p for s in self.stops for p in s.parcel_ids]

    def legs(self) -> list[float]:
        pts = [self.depot, *(s.coords for s in self.stops), self.depot]
        return [great_circle_km(a, b) for a, b in zip(pts, pts[1:])]


def route_length(depot: Coords, points: Sequence[Coords]) -> float:
    pts = [depot, *points, depot]
    return math.fsum(great_circle_km(a, b) for a, b in zip(pts, pts[1:]))


def _distance_matrix(points: Sequence[Coords]) -> np.ndarray:
    n = len(points)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = great_circle_km(points[i], points[j])
    return d


def nearest_neighbor_order(depot: Coords, points: Sequence[Coords]) -> list[int]:
    """Visit order starting at the depot, always moving to the closest unvisited point (ties: lowest index)."""
    dist = _distance_matrix([depot, *points])
    left = list(range(1, len(points) + 1))
    cur, order = 0, []
    while left:
        nxt = min(left, key=lambda j: (dist[cur, j], j))
        order.append(nxt - 1)
        left.remove(nxt)
        cur = nxt
    return order


def two_opt_order(depot: Coords, points: Sequence[Coords]) -> list[int]:
    """Best-improvement 2-opt on the closed route depot -> points -> depot; returns a visit order."""
    n = len(points)
    if n < 3:
        return list(range(n))
    dist = _distance_matrix([depot, *points])
    route = [0, *range(1, n + 1), 0]
    while True:
        best_gain, best_move = IMPROVE_TOL, None
        for i in range(1, n):
            a, b = route[i - 1], route[i]
            for j in range(i + 1, n + 1):
                c, d = route[j], route[j + 1]
                gain = dist[a, b] + dist[c, d] - dist[a, c] - dist[b, d]
                if gain > best_gain:
                    best_gain, best_move = gain, (i, j)
        if best_move is None:
            return [k - 1 for k in route[1:-1]]
        i, j = best_move
        route[i : j + 1] = route[i : j + 1][::-1]


def two_opt(tour: Tour) -> Tour:
    order = two_opt_order(tour.depot, [s.coords for s in tour.stops])
    stops = [tour.stops[k] for k in order]
    new = replace(tour, stops=stops, total_distance_km=route_length(tour.depot, [s.coords for s in stops]))
    if new.total_distance_km > tour.total_distance_km:
        return tour
    return new


def build_tours(
    parcels: Sequence[Parcel],
    carriers: Sequence[Carrier],
    zone_coords: Mapping[str, Coords],
    day: int,
    first_tour_id: int = 0,
) -> list[Tour]:
    """Route every parcel of each carrier from its depot, at most ``vehicle_capacity`` parcels per tour.

    Parcels to one zone form one stop (split if a single zone exceeds the
    capacity).  Stops are ordered by nearest neighbour from the depot and cut
    into capacity-sized chunks along that order; each chunk is re-ordered by
    nearest neighbour and improved with 2-opt.
    """
    by_carrier: dict[str, list[Parcel]] = defaultdict(list)
    for p in parcels:
        by_carrier[p.carrier_id].append(p)
    tours: list[Tour] = []
    tid = first_tour_id
    for carrier in sorted(carriers, key=lambda c: c.carrier_id):
        mine = by_carrier.get(carrier.carrier_id)
        if not mine:
            continue
        cap = carrier.vehicle_capacity
        depot = zone_coords[carrier.depot_zone]
        by_zone: dict[str, list[int]] = defaultdict(list)
        for p in sorted(mine, key=lambda p: p.parcel_id):
            by_zone[p.zone_id].append(p.parcel_id)
        stops: list[Stop] = []
        for zone_id in sorted(by_zone):
            ids = by_zone[zone_id]
            for k in range(0, len(ids), cap):
                stops.append(Stop(zone_id, zone_coords[zone_id], tuple(ids[k : k + cap])))

        chunks: list[list[Stop]] = [[]]
        load = 0
        for k in nearest_neighbor_order(depot, [s.coords for s in stops]):
            s = stops[k]
            if load + len(s.parcel_ids) > cap:
                chunks.append([])
                load = 0
            chunks[-1].append(s)
            load += len(s.parcel_ids)

        for chunk in chunks:
            nn = nearest_neighbor_order(depot, [s.coords for s in chunk])
            tour = Tour(tid, carrier.carrier_id, day, carrier.depot_zone, depot, [chunk[k] for k in nn])
            tours.append(two_opt(tour))
            tid += 1
    return tours


def simulate_delivery(
    tours: Sequence[Tour],
    carriers: Sequence[Carrier],
    rng: RandomStream,
    success_in_allocation: bool = True,
) -> list[tuple[int, bool]]:
    """Draw delivery outcomes in tour/stop order; returns (parcel_id, success) pairs.

    When success rates were already used for carrier allocation every
    delivery succeeds; otherwise each parcel succeeds with its carrier's rate.
    """
    rate = {c.carrier_id: c.success_rate for c in carriers}
    out = []
    for tour in tours:
        ids = tour.parcel_ids
        if success_in_allocation:
            ok = [True] * len(ids)
        else:
            ok = (rng.random(len(ids)) < rate[tour.carrier_id]).tolist()
        tour.outcomes = dict(zip(ids, ok))
        out.extend(zip(ids, ok))
    return out


@dataclass(frozen=True)
class SchedulingKpi:
    carrier_id: str
    day: int
    tours: int
    total_km: float
    parcels: int
    mean_parcels_per_tour: float
    failures: int


def scheduling_kpis(tours: Sequence[Tour], carriers: Sequence[str] = (), days: Sequence[int] = ()) -> list[SchedulingKpi]:
    groups: dict[tuple[str, int], list[Tour]] = {(c, d): [] for c in carriers for d in days}
    for t in tours:
        groups.setdefault((t.carrier_id, t.day), []).append(t)
    rows = []
    for (c, d) in sorted(groups, key=lambda k: (k[1], k[0])):
        ts = groups[(c, d)]
        n_parcels = sum(t.parcel_count for t in ts)
        rows.append(
            SchedulingKpi(
                c, d, len(ts),
                math.fsum(t.total_distance_km for t in ts),
                n_parcels,
                n_parcels / len(ts) if ts else 0.0,
                sum(1 for t in ts for ok in t.outcomes.values() if not ok),
            )
        )
    return rows
