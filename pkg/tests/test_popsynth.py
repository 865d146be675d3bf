from __future__ import annotations

from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from lmsim.errors import InconsistentMarginals, NotConverged, ParseError
from lmsim.popsynth import (
    fit_ipf,
    read_persons_csv,
    sample_population,
    seed_from_pairs,
    synthesize,
    write_households_csv,
    write_persons_csv,
)
from lmsim.scenario import Zone
from lmsim.streams import RandomStream

ZONES = (
    Zone("A", 52.0, 4.0, 1.0),
    Zone("B", 52.01, 4.0, 3.0),
    Zone("C", 52.02, 4.0, 0.0),
)


def _ipf_by_hand(seed, rows, cols, sweeps):
    """Row-then-column scaling in exact rational arithmetic."""
    t = [[Fraction(x) for x in r] for r in seed]
    for _ in range(sweeps):
        for i in range(2):
            s = sum(t[i])
            t[i] = [x * Fraction(rows[i]) / s for x in t[i]]
        for j in range(2):
            s = t[0][j] + t[1][j]
            for i in range(2):
                t[i][j] = t[i][j] * Fraction(cols[j]) / s
    return t


def _marginals(table):
    return [table.sum(axis=tuple(a for a in range(table.ndim) if a != k)) for k in range(table.ndim)]


# ---------------------------------------------------------------- IPF


def test_ipf_symmetric_case():
    out = fit_ipf(np.ones((2, 2)), [[50, 50], [50, 50]])
    assert out.tolist() == [[25.0, 25.0], [25.0, 25.0]]


def test_ipf_independent_seed_matches_hand_iteration():
    oracle = _ipf_by_hand([[1, 1], [1, 1]], (60, 40), (70, 30), sweeps=3)
    assert oracle == [[42, 18], [28, 12]]
    out = fit_ipf(np.ones((2, 2)), [[60, 40], [70, 30]])
    assert out.ravel().tolist() == [42.0, 18.0, 28.0, 12.0]


def test_ipf_non_uniform_seed_matches_rational_iteration():
    seed = [[1, 2], [3, 1]]
    out = fit_ipf(np.array(seed, dtype=float), [[60, 40], [70, 30]], tol=1e-12)
    oracle = _ipf_by_hand(seed, (60, 40), (70, 30), sweeps=200)
    assert np.allclose(out, np.array(oracle, dtype=float), atol=1e-9)


def test_ipf_inconsistent_totals():
    with pytest.raises(InconsistentMarginals):
        fit_ipf(np.ones((2, 2)), [[50, 50], [45, 45]])


def test_ipf_reports_non_convergence():
    # structural zeros make the column targets unreachable
    with pytest.raises(NotConverged) as info:
        fit_ipf(np.array([[1.0, 0.0], [0.0, 1.0]]), [[60, 40], [70, 30]], max_iter=50)
    assert info.value.residual > 1e-6
    assert info.value.iterations == 50


@pytest.mark.parametrize("k", range(10))
def test_ipf_random_three_attribute_instances(k):
    g = np.random.default_rng(k)
    shape = tuple(int(x) for x in g.integers(2, 5, size=3))
    n = 1000.0
    targets = [g.dirichlet(np.ones(s)) * n for s in shape]
    seed = g.uniform(0.1, 2.0, size=shape)
    out = fit_ipf(seed, targets, tol=1e-6)
    for got, want in zip(_marginals(out), targets):
        assert np.max(np.abs(got - want)) <= 1e-6
    assert out.min() >= 0
    assert out.sum() == pytest.approx(n, rel=1e-12)


def test_ipf_uniform_seed_gives_independence_product():
    g = np.random.default_rng(99)
    targets = [g.dirichlet(np.ones(s)) * 500 for s in (3, 2, 4)]
    out = fit_ipf(np.ones((3, 2, 4)), targets, tol=1e-10)
    product = np.einsum("i,j,k->ijk", *targets) / 500**2
    assert np.allclose(out, product, atol=1e-8)


def test_seed_from_pairs_embeds_cross_table():
    tab = np.array([[1.0, 2.0], [3.0, 4.0]])
    seed = seed_from_pairs((2, 3, 2), {(2, 0): tab})
    assert seed.shape == (2, 3, 2)
    assert seed[1, 2, 0] == tab[0, 1]
    assert seed[0, 1, 1] == tab[1, 0]


# ---------------------------------------------------------------- sampling


def test_sample_zero_persons():
    pop = sample_population(np.ones((2, 2)) / 4, 0, ZONES, [1.0], RandomStream(1))
    assert pop.persons == [] and pop.households == []


def test_single_person_households():
    pop = sample_population(np.ones((2, 2)) / 4, 37, ZONES[:1], [1.0, 0.0, 0.0], RandomStream(1))
    assert len(pop.households) == 37
    assert {h.zone_id for h in pop.households} == {"A"}


def test_sample_cell_frequencies():
    joint = np.array([[0.42, 0.18], [0.28, 0.12]])
    pop = sample_population(joint, 10_000, ZONES, [0.3, 0.4, 0.3], RandomStream(5))
    counts = Counter(p.attrs for p in pop.persons)
    observed = np.array([counts[(0, 0)], counts[(0, 1)], counts[(1, 0)], counts[(1, 1)]])
    assert np.all(np.abs(observed / 10_000 - joint.ravel()) <= 0.02)
    assert stats.chisquare(observed, joint.ravel() * 10_000).pvalue > 0.001


def test_partition_and_decision_maker():
    pop = sample_population(np.ones((2, 3)) / 6, 503, ZONES, [0.2, 0.3, 0.3, 0.2], RandomStream(11))
    assert len(pop.persons) == 503
    seen = Counter()
    for h in pop.households:
        assert h.members
        assert h.decision_maker == min(h.members)
        for m in h.members:
            person = pop.person_map[m]
            assert person.household_id == h.household_id
            assert person.zone_id == h.zone_id
            seen[m] += 1
    assert set(seen) == {p.person_id for p in pop.persons}
    assert set(seen.values()) == {1}


def test_zone_counts_within_binomial_bounds():
    pop = sample_population(np.ones((2, 2)) / 4, 6000, ZONES, [0.5, 0.5], RandomStream(3))
    n = len(pop.households)
    weights = np.array([z.population_weight for z in ZONES])
    probs = weights / weights.sum()
    counts = Counter(h.zone_id for h in pop.households)
    for z, p in zip(ZONES, probs):
        lo, hi = stats.binom.interval(0.99, n, p)
        assert lo <= counts.get(z.zone_id, 0) <= hi, z.zone_id


def test_same_stream_same_population(tmp_path, crowd_cfg):
    a = synthesize(crowd_cfg.population, crowd_cfg.zones, RandomStream(9, "pop"))
    b = synthesize(crowd_cfg.population, crowd_cfg.zones, RandomStream(9, "pop"))
    write_persons_csv(tmp_path / "a.csv", a)
    write_persons_csv(tmp_path / "b.csv", b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_household_income_follows_head(crowd_cfg):
    pop = synthesize(crowd_cfg.population, crowd_cfg.zones, RandomStream(2, "pop"))
    for h in pop.households:
        head = pop.person_map[h.decision_maker]
        assert h.income_band == pop.label(head, "income_band")
        assert h.n_employed == sum(pop.is_employed(pop.person_map[m]) for m in h.members)


def test_persons_csv_round_trip(tmp_path, crowd_cfg):
    pop = synthesize(crowd_cfg.population, crowd_cfg.zones, RandomStream(4, "pop"))
    write_persons_csv(tmp_path / "persons.csv", pop)
    write_households_csv(tmp_path / "households.csv", pop)
    back = read_persons_csv(tmp_path / "persons.csv", pop.schema, [z.zone_id for z in crowd_cfg.zones])
    assert back.persons == pop.persons
    assert back.households == pop.households


def test_persons_csv_unknown_category(tmp_path, crowd_cfg):
    pop = synthesize(crowd_cfg.population, crowd_cfg.zones, RandomStream(4, "pop"))
    path = tmp_path / "persons.csv"
    write_persons_csv(path, pop)
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0] + ",astronaut"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_persons_csv(path, pop.schema)
    assert info.value.line == 6
