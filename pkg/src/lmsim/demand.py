"""Household parcel demand and carrier allocation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidTransition
from .popsynth import HouseholdRecord
from .scenario import Carrier, DemandParams
from .streams import RandomStream

STATUSES = ("created", "assigned", "scheduled", "delivered", "failed")
_NEXT = {
    "created": ("assigned",),
    "assigned": ("scheduled",),
    "scheduled": ("delivered", "failed"),
    "delivered": (),
    "failed": (),
}


@dataclass
class Parcel:
    parcel_id: int
    day: int
    household_id: int
    zone_id: str
    carrier_id: str | None = None
    channel: str | None = None
    preferred_channel: str | None = None
    status: str = "created"
    history: list[str] = field(default_factory=lambda: ["created"])

    def advance(self, status: str) -> None:
        if status not in _NEXT[self.status]:
            raise InvalidTransition(f"parcel {self.parcel_id}: {self.status} -> {status}")
        if status == "assigned" and self.carrier_id is None:
            raise InvalidTransition(f"parcel {self.parcel_id}: assigned without a carrier")
        self.status = status
        self.history.append(status)


def household_rate(h: HouseholdRecord, params: DemandParams) -> float:
    """Expected parcels per day for one household."""
    income = params.income_multipliers.get(h.income_band, 1.0) if h.income_band is not None else 1.0
    return params.base_rate * income * (1.0 + params.employment_multiplier * h.n_employed)


def generate_demand(
    households: Sequence[HouseholdRecord],
    params: DemandParams,
    day: int,
    rng: RandomStream,
    first_id: int = 0,
) -> list[Parcel]:
    """Poisson parcel counts per household, households in ascending id order."""
    if day < 1:
        raise ValueError("day must be >= 1")
    hh = sorted(households, key=lambda h: h.household_id)
    if not hh:
        return []
    lam = np.array([household_rate(h, params) for h in hh])
    counts = rng.poisson(lam)
    parcels = []
    pid = first_id
    for h, n in zip(hh, counts.tolist()):
        for _ in range(n):
            parcels.append(Parcel(pid, day, h.household_id, h.zone_id))
            pid += 1
    return parcels


def allocation_weights(carriers: Sequence[Carrier], use_success: bool = True) -> np.ndarray:
    w = np.array([c.market_share * (c.success_rate if use_success else 1.0) for c in carriers])
    return w / w.sum()


def allocate_carriers(
    parcels: Sequence[Parcel],
    carriers: Sequence[Carrier],
    rng: RandomStream,
    use_success: bool = True,
) -> list[Parcel]:
    """Assign each parcel a carrier with probability proportional to share x success rate."""
    if not parcels:
        return list(parcels)
    idx = rng.categorical(allocation_weights(carriers, use_success), len(parcels))
    for p, k in zip(parcels, idx.tolist()):
        p.carrier_id = carriers[k].carrier_id
        p.advance("assigned")
    return list(parcels)


@dataclass(frozen=True)
class DemandKpis:
    total: int
    per_day: dict[int, int]
    per_zone: dict[str, int]
    per_carrier: dict[str, int]

    def rows(self):
        yield ("total", "all", self.total)
        for dim, table in (("day", self.per_day), ("zone", self.per_zone), ("carrier", self.per_carrier)):
            for key, n in table.items():
                yield (dim, key, n)


def demand_kpis(
    parcels: Sequence[Parcel],
    days: Sequence[int] = (),
    zones: Sequence[str] = (),
    carriers: Sequence[str] = (),
) -> DemandKpis:
    """Parcel counts per day, zone and carrier; listed keys are reported even when zero."""
    by_day = Counter(p.day for p in parcels)
    by_zone = Counter(p.zone_id for p in parcels)
    by_carrier = Counter(p.carrier_id for p in parcels if p.carrier_id is not None)

    def table(counter: Counter, keys) -> dict:
        out = {k: counter.get(k, 0) for k in keys}
        for k in sorted(counter):
            out.setdefault(k, counter[k])
        return out

    return DemandKpis(len(parcels), table(by_day, days), table(by_zone, zones), table(by_carrier, carriers))
