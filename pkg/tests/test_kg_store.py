from __future__ import annotations

import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgqa.embedding import HashedEmbedder
from kgqa.kg_store import (
    EntityId,
    GraphParseError,
    KnowledgeGraph,
    Triple,
    load_graph,
    normalize,
)


def test_normalize_collapses_whitespace():
    assert normalize("  DAVID   beckham ") == "david beckham"


def test_entity_equality_by_canonical():
    a = EntityId.from_surface("David Beckham")
    b = EntityId.from_surface("  david   BECKHAM ")
    assert a == b
    assert hash(a) == hash(b)


def test_triple_hashable_by_value():
    t1 = Triple.from_surface("A", "rel", "B")
    t2 = Triple.from_surface("a", "REL", "b")
    assert t1 == t2
    assert len({t1, t2}) == 1


def test_load_graph_fixture_counts(fixture_graph):
    assert fixture_graph.triple_count == 3
    assert fixture_graph.entity_count == 4


def test_load_graph_empty_stream():
    g = load_graph(io.StringIO(""))
    assert g.triple_count == 0
    assert g.entity_count == 0


def test_load_graph_deduplicates():
    line = "a\tb\tc"
    g = load_graph([line, line])
    assert g.triple_count == 1


def test_load_graph_malformed_line_reports_number():
    with pytest.raises(GraphParseError) as exc:
        load_graph(["a\tb\tc", "only two\tfields"])
    assert exc.value.line_number == 2


def test_load_graph_skips_comments_and_blanks():
    g = load_graph(["# comment", "", "a\tb\tc"])
    assert g.triple_count == 1


def test_load_graph_idempotent(fixture_graph):
    lines = ["\t".join(t.sort_key()) for t in fixture_graph.triples]
    reloaded = load_graph(lines)
    assert set(reloaded.triples) == set(fixture_graph.triples)


def test_resolve_entity_exact_match_ignores_threshold(fixture_graph):
    e = fixture_graph.resolve_entity("  DAVID beckham ", embedder=None, threshold=2.0)
    assert e is not None
    assert e.canonical == "david beckham"


def test_resolve_entity_unknown_mention_below_threshold(fixture_graph):
    # oracle: brute-force all mention-entity similarities and confirm none > 0.7
    from kgqa.embedding import cosine_sim

    embedder = HashedEmbedder()
    mention_vec = embedder.embed("zlatan")
    scores = [
        cosine_sim(mention_vec, embedder.embed(e.canonical))
        for e in fixture_graph.entities
    ]
    assert all(s <= 0.7 for s in scores)
    assert fixture_graph.resolve_entity("Zlatan", embedder, 0.7) is None


def test_resolve_entity_fuzzy_match_over_threshold(fixture_graph):
    embedder = HashedEmbedder()
    # shares both tokens with "alex ferguson" plus one extra
    e = fixture_graph.resolve_entity("Alex Ferguson OBE", embedder, 0.5)
    assert e is not None
    assert e.canonical == "alex ferguson"


def test_resolve_entity_empty_mention_rejected(fixture_graph):
    with pytest.raises(ValueError):
        fixture_graph.resolve_entity("   ")


def test_neighbors_one_hop_hub(fixture_graph):
    triples = fixture_graph.neighbors("alex ferguson", hops=1)
    assert triples == set(fixture_graph.triples)


def test_neighbors_unknown_entity(fixture_graph):
    assert fixture_graph.neighbors("nobody", hops=1) == set()


def test_neighbors_two_hops_from_leaf(fixture_graph):
    assert fixture_graph.neighbors("david beckham", hops=2) == set(fixture_graph.triples)


def test_neighbors_one_hop_from_leaf(fixture_graph):
    triples = fixture_graph.neighbors("david beckham", hops=1)
    assert len(triples) == 1
    (t,) = triples
    assert t.relation == "recruited_by"


def test_neighbors_rejects_zero_hops(fixture_graph):
    with pytest.raises(ValueError):
        fixture_graph.neighbors("david beckham", hops=0)


_entity = st.text(alphabet="abcdef", min_size=1, max_size=3)
_triples = st.lists(
    st.tuples(_entity, st.sampled_from(["r1", "r2"]), _entity), min_size=0, max_size=30
)


@settings(max_examples=50, deadline=None)
@given(_triples, _entity, st.integers(min_value=1, max_value=4))
def test_neighbors_monotone_in_hops(raw, entity, hops):
    g = KnowledgeGraph([Triple.from_surface(*t) for t in raw])
    smaller = g.neighbors(entity, hops)
    larger = g.neighbors(entity, hops + 1)
    assert smaller <= larger


@settings(max_examples=50, deadline=None)
@given(_triples)
def test_union_of_one_hop_neighborhoods_covers_graph(raw):
    g = KnowledgeGraph([Triple.from_surface(*t) for t in raw])
    union = set()
    for e in g.entities:
        union |= g.neighbors(e, 1)
    assert union == set(g.triples)
