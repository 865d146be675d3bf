from __future__ import annotations

from pathlib import Path

import pytest
from helpers import homophily_test, pair_similarities, read_csv, shrink

from lmsim.errors import SchemaMismatch, UnknownPerson
from lmsim.popsynth import PersonRecord, Population, synthesize
from lmsim.scenario import LAYERS, Attribute, AttributeSchema, Zone
from lmsim.socnet import SimilarityWeights, SocialNetwork, alters, build_layer, build_network, similarity, write_network_csv
from lmsim.streams import RandomStream

SCHEMA = AttributeSchema(tuple(Attribute(n, ("x", "y")) for n in ("a", "b", "c", "d")))
EQUAL = SimilarityWeights((0.25, 0.25, 0.25, 0.25), 0.0)


def _person(pid, attrs, zone="Z"):
    return PersonRecord(pid, pid, zone, tuple(attrs))


@pytest.fixture(scope="module")
def pop500():
    from lmsim.scenario import load_scenario

    cfg = shrink(load_scenario("crowdshipping_small"), persons=500)
    return cfg, synthesize(cfg.population, cfg.zones, RandomStream(17, "pop"))


# ---------------------------------------------------------------- similarity


def test_similarity_identical_colocated():
    w = SimilarityWeights((0.2, 0.2, 0.2, 0.2), 0.2)
    assert similarity(_person(0, (0, 1, 0, 1)), _person(1, (0, 1, 0, 1)), w, 0.0, 1.0) == 1.0


def test_similarity_all_different():
    assert similarity(_person(0, (0, 0, 0, 0)), _person(1, (1, 1, 1, 1)), EQUAL, 3.0, 1.0) == 0.0


def test_similarity_half_match():
    assert similarity(_person(0, (0, 0, 1, 1)), _person(1, (0, 0, 0, 0)), EQUAL, 0.0, 1.0) == 0.5


def test_similarity_spatial_half_life():
    w = SimilarityWeights((0.0, 0.0, 0.0, 0.0), 1.0)
    assert similarity(_person(0, (0,) * 4), _person(1, (1,) * 4), w, 2.0, 2.0) == pytest.approx(0.5, abs=1e-15)


def test_similarity_schema_mismatch():
    with pytest.raises(SchemaMismatch):
        similarity(_person(0, (0, 0, 0)), _person(1, (0, 0, 0, 0)), EQUAL, 0.0, 1.0)


def test_weights_normalised():
    w = SimilarityWeights.from_mapping({"a": 2.0, "c": 1.0, "spatial": 1.0}, SCHEMA)
    assert w.attrs == (0.5, 0.0, 0.25, 0.0)
    assert w.spatial == 0.25


def test_weights_unknown_attribute():
    with pytest.raises(SchemaMismatch):
        SimilarityWeights.from_mapping({"height": 1.0}, SCHEMA)


# ---------------------------------------------------------------- layers


def _tiny_population(people):
    return Population(SCHEMA, people, [], "a", "x")


def test_zero_mean_degree_gives_empty_layer(pop500):
    cfg, pop = pop500
    w = SimilarityWeights.from_mapping({"age_group": 1.0}, pop.schema)
    assert build_layer(pop, "friendship", w, 0.0, RandomStream(1), cfg.zones, 1.0) == []


def test_two_identical_persons_always_linked():
    zones = [Zone("Z", 52.0, 4.0, 1.0)]
    pop = _tiny_population([_person(0, (0, 0, 0, 0)), _person(1, (0, 0, 0, 0))])
    for seed in range(20):
        edges = build_layer(pop, "friendship", EQUAL, 1.0, RandomStream(seed), zones, 1.0)
        assert [(a, b) for a, b, _ in edges] == [(0, 1)]


def test_mean_degree_must_be_below_person_count():
    zones = [Zone("Z", 52.0, 4.0, 1.0)]
    pop = _tiny_population([_person(0, (0, 0, 0, 0)), _person(1, (0, 0, 0, 0))])
    with pytest.raises(ValueError):
        build_layer(pop, "friendship", EQUAL, 2.0, RandomStream(0), zones, 1.0)


def test_mean_degree_and_homophily_at_500(pop500):
    cfg, pop = pop500
    w = SimilarityWeights.from_mapping({"age_group": 2.0, "education": 1.0, "sex": 0.5, "spatial": 0.5}, pop.schema)
    edges = build_layer(pop, "friendship", w, 8.0, RandomStream(5), cfg.zones, cfg.network.d_half_km)
    mean_degree = 2 * len(edges) / len(pop.persons)
    assert abs(mean_degree - 8.0) <= 1.0
    members = [p.person_id for p in pop.persons]
    e, ne, p = homophily_test(pop, cfg.zones, w, cfg.network.d_half_km, edges, members, seed=1, permutations=500)
    assert e > ne
    assert p < 0.01


def test_stored_edge_weight_is_pair_similarity(pop500):
    cfg, pop = pop500
    w = SimilarityWeights.from_mapping({"education": 1.0, "spatial": 1.0}, pop.schema)
    edges = build_layer(pop, "friendship", w, 4.0, RandomStream(8), cfg.zones, cfg.network.d_half_km)
    oracle = pair_similarities(pop, cfg.zones, w, cfg.network.d_half_km, [(a, b) for a, b, _ in edges])
    assert [s for _, _, s in edges] == pytest.approx(oracle.tolist(), abs=1e-12)


def test_layer_restrictions_and_calibration(pop500):
    cfg, pop = pop500
    net = build_network(pop, cfg.zones, cfg.network, RandomStream(23))
    employed = {p.person_id for p in pop.employed()}
    zone_of = {p.person_id: p.zone_id for p in pop.persons}
    zmap = cfg.zone_map()
    from lmsim.scenario import great_circle_km

    for a, b, _ in net.layers["job"]:
        assert a in employed and b in employed
    for a, b, _ in net.layers["neighborhood"]:
        za, zb = zmap[zone_of[a]], zmap[zone_of[b]]
        assert great_circle_km(za.coords, zb.coords) <= cfg.network.adjacency_km
    pools = {"friendship": pop.persons, "job": pop.employed(), "neighborhood": pop.persons}
    for name in LAYERS:
        k = cfg.network.layers[name].k_mean
        realised = net.mean_degree(name, [p.person_id for p in pools[name]])
        assert abs(realised - k) <= max(1.0, 0.15 * k), name
        pairs = [(a, b) for a, b, _ in net.layers[name]]
        assert all(a < b for a, b in pairs)
        assert len(set(pairs)) == len(pairs)


def test_network_determinism(pop500):
    cfg, pop = pop500
    a = build_network(pop, cfg.zones, cfg.network, RandomStream(31))
    b = build_network(pop, cfg.zones, cfg.network, RandomStream(31))
    assert a.layers == b.layers


def test_network_csv(tmp_path: Path, pop500):
    cfg, pop = pop500
    net = build_network(pop, cfg.zones, cfg.network, RandomStream(31))
    write_network_csv(tmp_path / "network.csv", net)
    rows = read_csv(tmp_path / "network.csv")
    assert list(rows[0]) == ["layer", "person_a", "person_b", "weight"]
    assert len(rows) == sum(len(v) for v in net.layers.values())


# ---------------------------------------------------------------- alters


def test_isolated_person_has_no_alters():
    net = SocialNetwork.from_edges([0, 1], {})
    assert alters(net, 0) == {"friendship": [], "job": [], "neighborhood": []}


def test_single_edge_alters():
    net = SocialNetwork.from_edges([0, 1], {"friendship": [(0, 1)]})
    assert alters(net, 0)["friendship"] == [1]
    assert alters(net, 1)["friendship"] == [0]


def test_unknown_person():
    net = SocialNetwork.from_edges([0, 1], {})
    with pytest.raises(UnknownPerson):
        alters(net, 7)


def test_alters_symmetric_and_sorted(pop500):
    cfg, pop = pop500
    net = build_network(pop, cfg.zones, cfg.network, RandomStream(4))
    for p in pop.persons[:200]:
        per = alters(net, p.person_id)
        for layer, qs in per.items():
            assert qs == sorted(qs)
            for q in qs:
                assert p.person_id in alters(net, q)[layer]


def test_neighbors_use_strongest_layer():
    net = SocialNetwork.from_edges(
        [0, 1, 2], {"friendship": [(0, 1)], "job": [(0, 1), (0, 2)]}, influence={"friendship": 0.5, "job": 0.8}
    )
    assert net.neighbors(0) == [(1, 0.8), (2, 0.8)]
    assert net.degree(0) == 2
    assert net.degree(0, "friendship") == 1


def test_self_loop_rejected():
    with pytest.raises(ValueError):
        SocialNetwork.from_edges([0], {"job": [(0, 0)]})
