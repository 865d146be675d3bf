"""Synthetic population: iterative proportional fitting plus household sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InconsistentMarginals, NotConverged, ParseError
from .scenario import AttributeSchema, MarginalTable, PopulationParams, Zone
from .streams import RandomStream


@dataclass(frozen=True)
class PersonRecord:
    person_id: int
    household_id: int
    zone_id: str
    attrs: tuple[int, ...]


@dataclass(frozen=True)
class HouseholdRecord:
    household_id: int
    zone_id: str
    members: tuple[int, ...]
    income_band: str | None = None
    n_employed: int = 0

    @property
    def decision_maker(self) -> int:
        return min(self.members)


@dataclass
class Population:
    schema: AttributeSchema
    persons: list[PersonRecord]
    households: list[HouseholdRecord]
    employment_attribute: str = "employment"
    employed_category: str = "employed"

    @cached_property
    def person_map(self) -> dict[int, PersonRecord]:
        return {p.person_id: p for p in self.persons}

    @cached_property
    def household_map(self) -> dict[int, HouseholdRecord]:
        return {h.household_id: h for h in self.households}

    def label(self, person: PersonRecord, attribute: str) -> str:
        i = self.schema.index(attribute)
        return self.schema.attributes[i].categories[person.attrs[i]]

    def traits(self, person: PersonRecord) -> dict[str, str]:
        return {a.name: a.categories[k] for a, k in zip(self.schema.attributes, person.attrs)}

    def is_employed(self, person: PersonRecord) -> bool:
        if self.employment_attribute not in self.schema:
            return False
        return self.label(person, self.employment_attribute) == self.employed_category

    def employed(self) -> list[PersonRecord]:
        return [p for p in self.persons if self.is_employed(p)]


# ---------------------------------------------------------------- IPF


def seed_from_pairs(shape: Sequence[int], pairs: dict[tuple[int, int], np.ndarray] | None = None) -> np.ndarray:
    """Seed table as the product of pairwise cross-tables (uniform when none given)."""
    seed = np.ones(tuple(shape), dtype=float)
    for (i, j), tab in (pairs or {}).items():
        tab = np.asarray(tab, dtype=float)
        if i > j:
            tab = tab.T
        view = [1] * len(shape)
        view[i], view[j] = shape[i], shape[j]
        seed = seed * tab.reshape(view)
    return seed


def _marginal_vectors(marginals) -> list[np.ndarray]:
    if isinstance(marginals, MarginalTable):
        return [np.asarray(c, dtype=float) for c in marginals.counts]
    return [np.asarray(m, dtype=float) for m in marginals]


def fit_ipf(seed_table, marginals, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Scale ``seed_table`` until every one-dimensional marginal matches its target.

    Returns a nonnegative table of counts summing to the common marginal total.
    Raises InconsistentMarginals when the targets disagree on the total and
    NotConverged (carrying the last residual) when ``max_iter`` sweeps are not
    enough to bring every marginal cell within ``tol``.
    """
    table = np.array(seed_table, dtype=float)
    targets = _marginal_vectors(marginals)
    if table.ndim != len(targets):
        raise ValueError(f"seed table has {table.ndim} axes but {len(targets)} marginals were given")
    for axis, t in enumerate(targets):
        if t.shape != (table.shape[axis],):
            raise ValueError(f"marginal {axis} has {t.size} categories, table axis has {table.shape[axis]}")
        if (t < 0).any():
            raise ValueError(f"marginal {axis} has negative counts")
    if (table < 0).any():
        raise ValueError("seed table must be nonnegative")
    totals = [math.fsum(t) for t in targets]
    for axis, tot in enumerate(totals):
        if abs(tot - totals[0]) > 1e-9 * max(1.0, totals[0]):
            raise InconsistentMarginals(f"marginal {axis} sums to {tot:g}, marginal 0 to {totals[0]:g}")

    axes = range(table.ndim)
    residual = math.inf
    for it in range(1, max_iter + 1):
        for axis in axes:
            other = tuple(a for a in axes if a != axis)
            current = table.sum(axis=other)
            factor = np.divide(targets[axis], current, out=np.zeros_like(current), where=current > 0)
            shape = [1] * table.ndim
            shape[axis] = -1
            table = table * factor.reshape(shape)
        residual = max(
            float(np.max(np.abs(table.sum(axis=tuple(a for a in axes if a != axis)) - targets[axis])))
            for axis in axes
        )
        if residual <= tol:
            return table
    raise NotConverged(residual, max_iter, table)


# ---------------------------------------------------------------- sampling


def _draw_household_sizes(n: int, dist: np.ndarray, rng: RandomStream) -> list[int]:
    sizes: list[int] = []
    total = 0
    mean = float(np.dot(np.arange(1, dist.size + 1), dist / dist.sum()))
    while total < n:
        batch = max(8, math.ceil((n - total) / mean) + 8)
        for s in (rng.categorical(dist, batch) + 1).tolist():
            if total >= n:
                break
            s = min(s, n - total)
            sizes.append(s)
            total += s
    return sizes


def sample_population(
    joint,
    n: int,
    zones: Sequence[Zone],
    household_size_dist,
    rng: RandomStream,
    schema: AttributeSchema | None = None,
    income_attribute: str = "income_band",
    employment_attribute: str = "employment",
    employed_category: str = "employed",
) -> Population:
    """Draw ``n`` persons from ``joint`` and group them into zoned households.

    ``household_size_dist[k]`` is the probability of a household of size
    ``k + 1``; the last household is truncated so exactly ``n`` persons exist.
    Persons are numbered consecutively within households, so the decision
    maker (lowest id) is the first member.  The household income band is the
    decision maker's.
    """
    joint = np.asarray(joint, dtype=float)
    if schema is None:
        from .scenario import Attribute

        schema = AttributeSchema(
            tuple(Attribute(f"a{i}", tuple(str(c) for c in range(k))) for i, k in enumerate(joint.shape))
        )
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return Population(schema, [], [], employment_attribute, employed_category)

    cells = rng.categorical(joint.ravel(), n)
    attrs = np.stack(np.unravel_index(cells, joint.shape), axis=1)
    sizes = _draw_household_sizes(n, np.asarray(household_size_dist, dtype=float), rng)
    pool = rng.permutation(n)
    zone_idx = rng.categorical([z.population_weight for z in zones], len(sizes))

    inc_i = schema.index(income_attribute) if income_attribute in schema else None
    emp_i = schema.index(employment_attribute) if employment_attribute in schema else None
    emp_k = schema.attributes[emp_i].categories.index(employed_category) if emp_i is not None else None

    persons: list[PersonRecord] = []
    households: list[HouseholdRecord] = []
    pid = 0
    cursor = 0
    for hid, (size, zi) in enumerate(zip(sizes, zone_idx.tolist())):
        zone_id = zones[zi].zone_id
        members = []
        for k in range(size):
            row = tuple(int(v) for v in attrs[pool[cursor + k]])
            persons.append(PersonRecord(pid, hid, zone_id, row))
            members.append(pid)
            pid += 1
        cursor += size
        head = persons[members[0]]
        households.append(
            HouseholdRecord(
                hid,
                zone_id,
                tuple(members),
                schema.attributes[inc_i].categories[head.attrs[inc_i]] if inc_i is not None else None,
                sum(1 for m in members if emp_i is not None and persons[m].attrs[emp_i] == emp_k),
            )
        )
    return Population(schema, persons, households, employment_attribute, employed_category)


def synthesize(params: PopulationParams, zones: Sequence[Zone], rng: RandomStream) -> Population:
    """Fit the marginals with IPF from a uniform seed and sample the population."""
    schema = params.schema
    joint = fit_ipf(seed_from_pairs(schema.shape), params.marginals, params.ipf_tol, params.ipf_max_iter)
    return sample_population(
        joint / joint.sum(),
        params.persons,
        zones,
        params.household_sizes,
        rng,
        schema,
        params.income_attribute,
        params.employment_attribute,
        params.employed_category,
    )


# ---------------------------------------------------------------- CSV I/O


def write_persons_csv(path: str | Path, pop: Population) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "household_id", "zone_id", *pop.schema.names])
        for p in pop.persons:
            labels = [a.categories[k] for a, k in zip(pop.schema.attributes, p.attrs)]
            w.writerow([p.person_id, p.household_id, p.zone_id, *labels])


def write_households_csv(path: str | Path, pop: Population) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["household_id", "zone_id", "size", "decision_maker", "income_band", "n_employed", "members"])
        for h in pop.households:
            w.writerow([
                h.household_id, h.zone_id, len(h.members), h.decision_maker,
                h.income_band or "", h.n_employed, ";".join(map(str, h.members)),
            ])


def read_persons_csv(
    path: str | Path,
    schema: AttributeSchema,
    zone_ids: Sequence[str] | None = None,
    income_attribute: str = "income_band",
    employment_attribute: str = "employment",
    employed_category: str = "employed",
) -> Population:
    """Load a pre-built population; households are rebuilt from person rows."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        need = ["person_id", "household_id", "zone_id", *schema.names]
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(path, 1, f"missing columns {missing}")
        persons = []
        for row in reader:
            try:
                attrs = tuple(a.categories.index(row[a.name]) for a in schema.attributes)
                pid, hid = int(row["person_id"]), int(row["household_id"])
            except ValueError as exc:
                raise ParseError(path, reader.line_num, str(exc)) from None
            if zone_ids is not None and row["zone_id"] not in zone_ids:
                raise ParseError(path, reader.line_num, f"unknown zone {row['zone_id']!r}")
            persons.append(PersonRecord(pid, hid, row["zone_id"], attrs))
    persons.sort(key=lambda p: p.person_id)
    if len({p.person_id for p in persons}) != len(persons):
        raise ParseError(path, None, "duplicate person_id")

    by_hh: dict[int, list[PersonRecord]] = {}
    for p in persons:
        by_hh.setdefault(p.household_id, []).append(p)
    inc_i = schema.index(income_attribute) if income_attribute in schema else None
    emp_i = schema.index(employment_attribute) if employment_attribute in schema else None
    households = []
    for hid in sorted(by_hh):
        members = by_hh[hid]
        if len({m.zone_id for m in members}) != 1:
            raise ParseError(path, None, f"household {hid} spans several zones")
        head = members[0]
        households.append(
            HouseholdRecord(
                hid,
                head.zone_id,
                tuple(m.person_id for m in members),
                schema.attributes[inc_i].categories[head.attrs[inc_i]] if inc_i is not None else None,
                sum(
                    1 for m in members
                    if emp_i is not None and schema.attributes[emp_i].categories[m.attrs[emp_i]] == employed_category
                ),
            )
        )
    return Population(schema, persons, households, employment_attribute, employed_category)
