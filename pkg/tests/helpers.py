"""Shared builders and file helpers for the test suite."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from lmsim.scenario import ScenarioConfig


def shrink(cfg: ScenarioConfig, persons: int = 200, days: int | None = None, seed: int | None = None) -> ScenarioConfig:
    return replace(
        cfg,
        population=replace(cfg.population, persons=persons),
        day_count=cfg.day_count if days is None else days,
        seed=cfg.seed if seed is None else seed,
    )


def fuzz_scenario(base: ScenarioConfig, k: int) -> ScenarioConfig:
    """A randomly perturbed small variant of ``base``; deterministic in ``k``."""
    g = np.random.default_rng([20261017, k])
    carriers = tuple(
        replace(c, vehicle_capacity=int(g.integers(3, 40)), success_rate=float(g.uniform(0.3, 1.0)))
        for c in base.carriers
    )
    lockers = tuple(
        replace(
            lk,
            capacity=int(g.integers(1, 9)),
            availability="".join(g.choice(["0", "1"], size=int(g.integers(1, 8)), p=[0.3, 0.7])),
        )
        for lk in base.lockers
    )
    cfg = replace(
        shrink(base, persons=int(g.integers(60, 220)), days=int(g.integers(1, 4)), seed=int(g.integers(0, 2**63))),
        carriers=carriers,
        lockers=lockers,
        demand=replace(
            base.demand,
            base_rate=float(g.uniform(0.05, 0.8)),
            success_in_allocation=bool(g.integers(0, 2)),
        ),
        crowdshipping=replace(
            base.crowdshipping,
            participation_rate=float(g.uniform(0.0, 0.5)),
            max_detour_km=float(g.uniform(0.3, 4.0)),
            trip_capacity=int(g.integers(1, 4)),
        ),
        walk_max_km=float(g.uniform(0.3, 3.0)),
    )
    return cfg


def read_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def tree_digests(root: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(root).iterdir())}



def pair_similarities(pop, zones, weights, d_half, pairs) -> np.ndarray:
    """Similarity of each (a, b) person-id pair, computed with plain loops."""
    import math

    from lmsim.scenario import great_circle_km

    zmap = {z.zone_id: z.coords for z in zones}
    pm = pop.person_map
    out = []
    for a, b in pairs:
        pa, pb = pm[a], pm[b]
        s = sum(w for w, x, y in zip(weights.attrs, pa.attrs, pb.attrs) if x == y)
        s += weights.spatial * math.exp(-math.log(2) * great_circle_km(zmap[pa.zone_id], zmap[pb.zone_id]) / d_half)
        out.append(s)
    return np.array(out)


def homophily_test(pop, zones, weights, d_half, edges, members, seed=0, permutations=2000):
    """One-sided permutation test of mean edge similarity against uniform non-edges.

    Returns (mean edge similarity, mean non-edge similarity, p-value).
    """
    g = np.random.default_rng(seed)
    ids = np.array(sorted(members))
    edge_set = {(a, b) for a, b, _ in edges}
    non_edges = []
    while len(non_edges) < len(edges):
        a, b = (int(x) for x in g.choice(ids, size=2, replace=False))
        a, b = min(a, b), max(a, b)
        if (a, b) not in edge_set:
            non_edges.append((a, b))
    e = pair_similarities(pop, zones, weights, d_half, [(a, b) for a, b, _ in edges])
    ne = pair_similarities(pop, zones, weights, d_half, non_edges)
    observed = e.mean() - ne.mean()
    pooled = np.concatenate([e, ne])
    n = len(e)
    hits = 0
    for _ in range(permutations):
        perm = g.permutation(pooled)
        if perm[:n].mean() - perm[n:].mean() >= observed:
            hits += 1
    return float(e.mean()), float(ne.mean()), (hits + 1) / (permutations + 1)


def distance_matrix(points) -> np.ndarray:
    from lmsim.scenario import great_circle_km

    n = len(points)
    return np.array([[great_circle_km(points[i], points[j]) for j in range(n)] for i in range(n)])


def brute_force_tour(depot, stops) -> float:
    """Shortest closed route depot -> every stop -> depot, by trying every visiting order."""
    import itertools

    d = distance_matrix([depot, *stops])
    n = len(stops)
    if n == 0:
        return 0.0
    perms = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int64)
    lengths = d[0, perms[:, 0]] + d[perms[:, -1], 0]
    for k in range(n - 1):
        lengths += d[perms[:, k], perms[:, k + 1]]
    return float(lengths.min())
