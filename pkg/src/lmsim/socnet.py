"""Homophily social networks: friendship, job and neighborhood layers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import SchemaMismatch, UnknownPerson
from .popsynth import PersonRecord, Population
from .scenario import LAYERS, AttributeSchema, LayerParams, NetworkParams, Zone, great_circle_km
from .streams import RandomStream

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SimilarityWeights:
    """Per-attribute weights (aligned with the schema) plus a spatial weight, summing to 1."""

    attrs: tuple[float, ...]
    spatial: float

    @classmethod
    def from_mapping(cls, weights: Mapping[str, float], schema: AttributeSchema) -> "SimilarityWeights":
        for k in weights:
            if k != "spatial" and k not in schema:
                raise SchemaMismatch(f"weight for unknown attribute {k!r}")
        raw = [float(weights.get(name, 0.0)) for name in schema.names]
        spatial = float(weights.get("spatial", 0.0))
        total = math.fsum(raw) + spatial
        if total <= 0 or min(raw + [spatial]) < 0:
            raise ValueError("similarity weights must be nonnegative with positive sum")
        return cls(tuple(w / total for w in raw), spatial / total)


def spatial_kernel(distance_km, d_half: float):
    """Exponential decay that halves every ``d_half`` km."""
    return np.exp(-LN2 * np.asarray(distance_km, dtype=float) / d_half)


def similarity(a: PersonRecord, b: PersonRecord, w: SimilarityWeights, zone_distance_km: float, d_half: float) -> float:
    if len(a.attrs) != len(b.attrs) or len(a.attrs) != len(w.attrs):
        raise SchemaMismatch(f"attribute counts differ: {len(a.attrs)}, {len(b.attrs)}, weights {len(w.attrs)}")
    if d_half <= 0:
        raise ValueError("d_half must be > 0")
    s = math.fsum(wk for wk, x, y in zip(w.attrs, a.attrs, b.attrs) if x == y)
    s += w.spatial * math.exp(-LN2 * zone_distance_km / d_half)
    return min(1.0, max(0.0, s))


@dataclass
class SocialNetwork:
    """Three undirected edge layers over person ids; edges stored as (a, b, weight) with a < b."""

    persons: frozenset[int]
    layers: dict[str, list[tuple[int, int, float]]]
    influence: dict[str, float] = field(default_factory=lambda: {name: 1.0 for name in LAYERS})
    _adj: dict[int, dict[str, list[int]]] | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_edges(cls, persons, edges: Mapping[str, Sequence[tuple]], influence=None) -> "SocialNetwork":
        layers = {}
        for name in LAYERS:
            seen = {}
            for e in edges.get(name, ()):
                a, b = int(e[0]), int(e[1])
                wgt = float(e[2]) if len(e) > 2 else 1.0
                if a == b:
                    raise ValueError(f"self-loop on {a} in {name}")
                seen[(min(a, b), max(a, b))] = wgt
            layers[name] = [(a, b, w) for (a, b), w in sorted(seen.items())]
        net = cls(frozenset(int(p) for p in persons), layers)
        if influence:
            net.influence.update(influence)
        return net

    def _adjacency(self) -> dict[int, dict[str, list[int]]]:
        if self._adj is None:
            adj: dict[int, dict[str, list[int]]] = {p: {name: [] for name in LAYERS} for p in self.persons}
            for name in LAYERS:
                for a, b, _ in self.layers.get(name, ()):
                    adj[a][name].append(b)
                    adj[b][name].append(a)
            for per in adj.values():
                for lst in per.values():
                    lst.sort()
            self._adj = adj
        return self._adj

    def degree(self, person_id: int, layer: str | None = None) -> int:
        per = alters(self, person_id)
        if layer is not None:
            return len(per[layer])
        return len(set().union(*per.values()))

    def neighbors(self, person_id: int) -> list[tuple[int, float]]:
        """Distinct alters across layers with the strongest layer influence multiplier."""
        per = alters(self, person_id)
        best: dict[int, float] = {}
        for name in LAYERS:
            m = self.influence.get(name, 1.0)
            for q in per[name]:
                best[q] = max(best.get(q, 0.0), m)
        return sorted(best.items())

    def mean_degree(self, layer: str, among: Sequence[int] | None = None) -> float:
        pool = self.persons if among is None else among
        n = len(pool)
        if n == 0:
            return 0.0
        return 2.0 * len(self.layers[layer]) / n


def alters(network: SocialNetwork, person_id: int) -> dict[str, list[int]]:
    adj = network._adjacency()
    if person_id not in adj:
        raise UnknownPerson(person_id)
    return {name: list(lst) for name, lst in adj[person_id].items()}


# ---------------------------------------------------------------- construction


def _zone_distance_matrix(zones: Sequence[Zone]) -> np.ndarray:
    n = len(zones)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = great_circle_km(zones[i].coords, zones[j].coords)
    return d


def _all_pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(m, k=1)
    return i.astype(np.int64), j.astype(np.int64)


def _stratified_pairs(m: int, per_person: int, rng: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    """``per_person`` uniformly drawn partners for every person, deduplicated as unordered pairs."""
    src = np.repeat(np.arange(m, dtype=np.int64), per_person)
    # offset in [1, m-1] never maps a person to itself
    dst = (src + 1 + (rng.u64s(src.size) % np.uint64(m - 1)).astype(np.int64)) % m
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    keys = np.unique(lo * m + hi)
    return keys // m, keys % m


def calibrate_scale(sims: np.ndarray, target_edges: float, iterations: int = 200) -> float:
    """Scale c with sum(min(1, c*s)) == target_edges, by bisection; inf when saturated."""
    positive = sims[sims > 0]
    if target_edges <= 0 or positive.size == 0:
        return 0.0
    if target_edges >= positive.size:
        return math.inf
    lo, hi = 0.0, 1.0 / float(positive.min())
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if np.minimum(1.0, mid * positive).sum() < target_edges:
            lo = mid
        else:
            hi = mid
    return hi


def candidate_pairs(
    members: Sequence[PersonRecord],
    layer_kind: str,
    zone_index: Mapping[str, int],
    zone_dist: np.ndarray,
    adjacency_km: float,
    candidates_per_person: int,
    rng: RandomStream,
) -> tuple[np.ndarray, np.ndarray]:
    m = len(members)
    if m < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if layer_kind == "neighborhood":
        zi = np.array([zone_index[p.zone_id] for p in members])
        i, j = _all_pairs(m)
        keep = zone_dist[zi[i], zi[j]] <= adjacency_km
        return i[keep], j[keep]
    if layer_kind == "friendship" and m * (m - 1) // 2 > candidates_per_person * m:
        return _stratified_pairs(m, candidates_per_person, rng)
    return _all_pairs(m)


def build_layer(
    pop: Population,
    layer_kind: str,
    w: SimilarityWeights,
    k_mean: float,
    rng: RandomStream,
    zones: Sequence[Zone],
    d_half: float,
    adjacency_km: float = 0.0,
    candidates_per_person: int = 50,
) -> list[tuple[int, int, float]]:
    """Sample one homophily layer.

    Each candidate pair is admitted with probability ``min(1, c * similarity)``
    where ``c`` is solved so the expected mean degree over the layer's
    eligible persons equals ``k_mean``.  The job layer only links employed
    persons; the neighborhood layer only links persons in the same zone or in
    zones whose centroids are within ``adjacency_km``.
    """
    if layer_kind not in LAYERS:
        raise ValueError(f"unknown layer {layer_kind!r}")
    if pop.persons and k_mean >= len(pop.persons):
        raise ValueError(f"k_mean {k_mean} must be below the person count {len(pop.persons)}")
    members = sorted(pop.employed() if layer_kind == "job" else pop.persons, key=lambda p: p.person_id)
    if k_mean <= 0 or len(members) < 2:
        return []
    zone_index = {z.zone_id: k for k, z in enumerate(zones)}
    zone_dist = _zone_distance_matrix(zones)
    i, j = candidate_pairs(
        members, layer_kind, zone_index, zone_dist, adjacency_km, candidates_per_person, rng.derive("candidates")
    )
    if i.size == 0:
        return []

    attrs = np.array([p.attrs for p in members], dtype=np.int64)
    if attrs.shape[1] != len(w.attrs):
        raise SchemaMismatch(f"persons carry {attrs.shape[1]} attributes, weights {len(w.attrs)}")
    zi = np.array([zone_index[p.zone_id] for p in members])
    sims = (attrs[i] == attrs[j]).astype(float) @ np.asarray(w.attrs)
    sims += w.spatial * spatial_kernel(zone_dist[zi[i], zi[j]], d_half)
    np.clip(sims, 0.0, 1.0, out=sims)

    c = calibrate_scale(sims, k_mean * len(members) / 2.0)
    p = np.where(sims > 0, 1.0, 0.0) if math.isinf(c) else np.minimum(1.0, c * sims)
    u = rng.derive("admit").random(i.size)
    keep = u < p
    ids = np.array([q.person_id for q in members], dtype=np.int64)
    return [(int(a), int(b), float(s)) for a, b, s in zip(ids[i[keep]], ids[j[keep]], sims[keep])]


def build_network(pop: Population, zones: Sequence[Zone], params: NetworkParams, rng: RandomStream) -> SocialNetwork:
    layers = {}
    for name in LAYERS:
        lay: LayerParams = params.layers[name]
        w = SimilarityWeights.from_mapping(lay.weights, pop.schema)
        layers[name] = build_layer(
            pop, name, w, lay.k_mean, rng.derive(name), zones, params.d_half_km,
            params.adjacency_km, params.candidates_per_person,
        )
    return SocialNetwork(
        frozenset(p.person_id for p in pop.persons),
        layers,
        {name: params.layers[name].influence for name in LAYERS},
    )


def write_network_csv(path: str | Path, network: SocialNetwork) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["layer", "person_a", "person_b", "weight"])
        for name in LAYERS:
            for a, b, wgt in network.layers[name]:
                out.writerow([name, a, b, repr(round(wgt, 12))])
