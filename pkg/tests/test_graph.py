import io
import random

import pytest

from pathrec.errors import InputError
from pathrec.graph import STAY_RELATION, KnowledgeGraph, ReasoningPath


def build_pair():
    g = KnowledgeGraph()
    a = g.register_entity("topic", "a")
    b = g.register_entity("topic", "b")
    r = g.register_relation("rel")
    return g, a, b, r


def test_first_entity_gets_dense_id_zero():
    g = KnowledgeGraph()
    assert g.register_entity("subscriber", "s1") == 0
    assert g.register_entity("subscriber", "s2") == 1


def test_register_entity_idempotent():
    g = KnowledgeGraph()
    first = g.register_entity("subscriber", "s1")
    again = g.register_entity("subscriber", "s1")
    assert first == again
    assert g.num_entities() == 1


def test_register_entity_empty_key_rejected():
    g = KnowledgeGraph()
    with pytest.raises(InputError):
        g.register_entity("topic", "")


def test_same_key_different_kind_is_distinct():
    g = KnowledgeGraph()
    assert g.register_entity("subscriber", "x") != g.register_entity("topic", "x")


def test_relations_created_in_forward_reverse_pairs():
    g = KnowledgeGraph()
    fwd = g.register_relation("has_topic")
    rev = g.relations[fwd].inverse
    assert not g.relations[fwd].is_reverse
    assert g.relations[rev].is_reverse
    assert g.relations[rev].inverse == fwd
    assert g.relations[rev].name == "has_topic_rev"
    # registering the reverse name resolves to the existing partner
    assert g.register_relation("has_topic_rev") == rev


def test_add_triple_and_dedup():
    g, a, b, r = build_pair()
    g.add_triple(a, r, b)
    assert g.num_triples() == 1
    g.add_triple(a, r, b)
    assert g.num_triples() == 1


def test_add_triple_unregistered_tail_rejected():
    g, a, _, r = build_pair()
    with pytest.raises(InputError):
        g.add_triple(a, r, 99)


def test_augment_reverse_edges_adds_reverse_triple():
    g, a, b, r = build_pair()
    g.add_triple(a, r, b)
    g.augment_reverse_edges()
    assert g.num_triples() == 2
    assert (b, g.relations[r].inverse, a) in g.triples


def test_augment_reverse_edges_empty_graph():
    g = KnowledgeGraph()
    g.augment_reverse_edges()
    assert g.num_triples() == 0


def test_augment_reverse_edges_idempotent():
    g, a, b, r = build_pair()
    g.add_triple(a, r, b)
    g.augment_reverse_edges()
    g.augment_reverse_edges()
    assert g.num_triples() == 2


def test_augment_doubles_triple_count_and_fills_sinks():
    # acceptance criterion: no symmetric relations -> exactly 2n triples,
    # every former pure-sink gains out-edges
    rng = random.Random(11)
    g = KnowledgeGraph()
    ents = [g.register_entity("node", f"n{i}") for i in range(12)]
    rels = [g.register_relation(f"r{i}") for i in range(3)]
    for _ in range(25):
        h, t = rng.sample(ents, 2)
        g.add_triple(h, rng.choice(rels), t)
    n = g.num_triples()
    sinks = [e for e in ents if g.out_degree(e) == 0 and
             any(t == e for _, _, t in g.triples)]
    g.augment_reverse_edges()
    assert g.num_triples() == 2 * n
    for e in sinks:
        assert g.out_degree(e) > 0


def test_out_edges_empty_for_isolated_entity():
    g = KnowledgeGraph()
    e = g.register_entity("topic", "alone")
    assert g.out_edges(e) == []


def test_out_edges_matches_brute_force_scan():
    rng = random.Random(3)
    g = KnowledgeGraph()
    ents = [g.register_entity("node", f"n{i}") for i in range(10)]
    rels = [g.register_relation(f"r{i}") for i in range(4)]
    for _ in range(40):
        g.add_triple(rng.choice(ents), rng.choice(rels), rng.choice(ents))
    g.augment_reverse_edges()
    for e in ents:
        expected = sorted((r, t) for h, r, t in g.triples if h == e)
        assert g.out_edges(e) == expected


def test_out_edges_after_reverse_augmentation():
    g, a, b, r = build_pair()
    g.add_triple(a, r, b)
    g.augment_reverse_edges()
    assert g.out_edges(b) == [(g.relations[r].inverse, a)]


def test_out_edges_unregistered_entity_rejected():
    g = KnowledgeGraph()
    with pytest.raises(InputError):
        g.out_edges(0)


def test_out_index_insertion_order_insensitive():
    rng = random.Random(7)
    triples = [(h, r, t) for h in range(5) for r in range(2) for t in range(5) if h != t]
    sample = rng.sample(triples, 20)

    def build(order):
        g = KnowledgeGraph()
        for i in range(5):
            g.register_entity("node", f"n{i}")
        for i in range(2):
            g.register_relation(f"r{i}")
        for h, r, t in order:
            g.add_triple(h, 2 * r, t)  # relation ids are paired, forward ids are even
        return g

    g1 = build(sample)
    shuffled = sample[:]
    rng.shuffle(shuffled)
    g2 = build(shuffled)
    assert g1.triples == g2.triples
    for e in range(5):
        assert g1.out_edges(e) == g2.out_edges(e)


def test_out_degree_sums_to_triple_count():
    rng = random.Random(5)
    g = KnowledgeGraph()
    ents = [g.register_entity("node", f"n{i}") for i in range(8)]
    rel = g.register_relation("r")
    for _ in range(30):
        g.add_triple(rng.choice(ents), rel, rng.choice(ents))
    assert sum(g.out_degree(e) for e in ents) == g.num_triples()


def test_frozen_graph_rejects_mutation():
    g, a, b, r = build_pair()
    g.add_triple(a, r, b)
    g.freeze()
    with pytest.raises(InputError):
        g.add_triple(b, r, a)
    with pytest.raises(InputError):
        g.register_entity("topic", "c")
    assert g.out_edges(a) == [(r, b)]


def test_validate_path_zero_hop():
    g = KnowledgeGraph()
    u = g.register_entity("subscriber", "u")
    assert g.validate_path(ReasoningPath(entities=(u,)))


def test_validate_path_rejects_missing_edge():
    g, a, b, r = build_pair()
    assert not g.validate_path(ReasoningPath(entities=(a, b), relations=(r,)))
    g.add_triple(a, r, b)
    assert g.validate_path(ReasoningPath(entities=(a, b), relations=(r,)))


def test_validate_path_rejects_length_mismatch():
    g, a, b, r = build_pair()
    g.add_triple(a, r, b)
    assert not g.validate_path(ReasoningPath(entities=(a, b), relations=()))
    assert not g.validate_path(ReasoningPath(entities=(), relations=()))


def test_validate_path_stay_hops():
    g = KnowledgeGraph()
    u = g.register_entity("subscriber", "u")
    v = g.register_entity("topic", "v")
    ok = ReasoningPath(entities=(u, u), relations=(STAY_RELATION,))
    moved = ReasoningPath(entities=(u, v), relations=(STAY_RELATION,))
    assert g.validate_path(ok)
    assert not g.validate_path(moved)
    assert ok.hops == 0


def test_dump_load_round_trip():
    g = KnowledgeGraph()
    s = g.register_entity("subscriber", "s1")
    a = g.register_entity("educational_article", "a1")
    t = g.register_entity("topic", "retirement")
    resp = g.register_relation("has_response")
    top = g.register_relation("has_topic")
    g.add_triple(s, resp, a)
    g.add_triple(a, top, t)
    g.augment_reverse_edges()

    buf = io.StringIO()
    g.dump_triples(buf)
    reloaded = KnowledgeGraph.load_triples(buf.getvalue().splitlines())

    buf2 = io.StringIO()
    reloaded.dump_triples(buf2)
    assert sorted(buf.getvalue().splitlines()) == sorted(buf2.getvalue().splitlines())
    assert reloaded.num_triples() == g.num_triples()
    assert reloaded.num_entities() == g.num_entities()


def test_dump_is_deterministic():
    def build():
        g = KnowledgeGraph()
        xs = [g.register_entity("node", f"n{i}") for i in range(6)]
        r = g.register_relation("r")
        for i in range(5):
            g.add_triple(xs[i], r, xs[i + 1])
        g.augment_reverse_edges()
        buf = io.StringIO()
        g.dump_triples(buf)
        return buf.getvalue()

    assert build() == build()
