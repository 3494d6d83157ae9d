from __future__ import annotations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astrodiag.askrag.aggregate import (
    FALLBACK_RELATION,
    MessagePassingConfig,
    aggregate,
    join_on_shared_nodes,
    label_new_edges,
    link_by_similarity,
    normalized_adjacency,
    projection_weights,
    smooth_embeddings,
)
from astrodiag.backends import MockBackend, fenced
from astrodiag.kg import EmbeddingStore, GraphValidationError, KgEdge, KgNode, KnowledgeGraph

from _oracles import dense_smoothing, plain_adjacency
from _util import random_embeds, random_graph


def g_of(ids, edges, texts=None):
    texts = texts or {}
    return KnowledgeGraph(
        tuple(KgNode(i, i.upper(), texts.get(i, "")) for i in ids),
        tuple(KgEdge(a, b, "r") for a, b in edges),
    )


def test_normalized_adjacency_against_networkx():
    g = random_graph(np.random.default_rng(3), 6, 0.5)
    nxg = nx.Graph()
    nxg.add_nodes_from(g.node_ids)
    nxg.add_edges_from((e.src, e.dst) for e in g.edges)
    a = nx.to_numpy_array(nxg, nodelist=g.node_ids) + np.eye(len(g))
    d = np.diag(1 / np.sqrt(a.sum(1)))
    np.testing.assert_allclose(normalized_adjacency(g), d @ a @ d, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 8), st.integers(1, 6))
def test_smoothing_matches_dense_reference(seed, n, hidden, dim):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.5)
    emb = random_embeds(rng, g, dim)
    cfg = MessagePassingConfig(hidden_dim=hidden, seed=seed % 1000)
    got = smooth_embeddings(g, emb, cfg)
    x = np.stack([emb[i] for i in g.node_ids])
    w1, w2 = projection_weights(dim, cfg)
    want = dense_smoothing(plain_adjacency(g), x, w1, w2)
    for k, nid in enumerate(g.node_ids):
        np.testing.assert_allclose(got[nid], want[k], atol=1e-6, rtol=0)


def test_projection_weights_are_seeded():
    cfg = MessagePassingConfig(hidden_dim=4, seed=11)
    a, b = projection_weights(3, cfg), projection_weights(3, cfg)
    np.testing.assert_array_equal(a[0], b[0])
    c = projection_weights(3, MessagePassingConfig(hidden_dim=4, seed=12))
    assert not np.array_equal(a[0], c[0])
    assert np.all(np.abs(a[0]) <= np.sqrt(6 / 7))


def test_join_on_shared_node_unions_neighbors():
    g1 = g_of("am", [("a", "m")])
    g2 = g_of("bm", [("b", "m")])
    j = join_on_shared_nodes(g1, g2)
    assert j.neighbors("m") == ("a", "b")


def test_join_label_conflict():
    g1 = KnowledgeGraph((KgNode("m", "M"),))
    g2 = KnowledgeGraph((KgNode("m", "other"),))
    with pytest.raises(GraphValidationError, match="'m'"):
        join_on_shared_nodes(g1, g2)


def test_join_concatenates_texts():
    g1 = KnowledgeGraph((KgNode("m", "M", "first"),))
    g2 = KnowledgeGraph((KgNode("m", "M", "second"),))
    assert join_on_shared_nodes(g1, g2).node("m").text == "first\nsecond"
    assert join_on_shared_nodes(g1, g1).node("m").text == "first"


def test_link_by_similarity_cross_side_only():
    g = g_of("abcd", [("a", "b")])
    v = {"a": [1, 0], "b": [1, 0.1], "c": [1, 0.02], "d": [0, 1]}
    sm = EmbeddingStore("s", 2, v)
    pairs = link_by_similarity(g, sm, {"a": 1, "b": 1, "c": 2, "d": 2}, MessagePassingConfig(top_k_edges=2))
    assert [(p[0], p[1]) for p in pairs] == [("a", "c"), ("b", "c")]
    assert all(p[2] >= q[2] for p, q in zip(pairs, pairs[1:]))


def test_label_new_edges_scripted_and_fallback():
    g = g_of("ab", [])
    backend = MockBackend({"edge_label:a:b": fenced({"relation": "calibrates"})})
    (edge,) = label_new_edges([("a", "b", 0.7)], g, backend)
    assert edge.relation == "calibrates" and edge.weight == 0.7
    warnings: list[str] = []
    (edge,) = label_new_edges([("a", "b", 0.7)], g, MockBackend(default_reply="no idea"), warnings=warnings)
    assert edge.relation == FALLBACK_RELATION and warnings


def test_label_reuses_root_relation():
    root = KnowledgeGraph((KgNode("a", "A"), KgNode("b", "B")), (KgEdge("a", "b", "feeds"),))
    backend = MockBackend()
    (edge,) = label_new_edges([("a", "b", 0.3)], root, backend)
    assert edge.relation == "feeds" and backend.calls == []


def test_aggregate_end_to_end():
    g1 = g_of("abm", [("a", "m"), ("a", "b")])
    g2 = g_of("cdm", [("c", "m"), ("c", "d")])
    root = g_of("abcdm", [("a", "m"), ("a", "b"), ("c", "m"), ("c", "d")])
    rng = np.random.default_rng(0)
    emb = random_embeds(rng, root, 5)
    backend = MockBackend({"edge_label": fenced({"relation": "calibrates"})})
    res = aggregate(g1, g2, root, emb, backend, MessagePassingConfig(hidden_dim=4, top_k_edges=2))
    assert set(res.merged.node_ids) == set("abcdm")
    assert len(res.new_edges) == 2
    for src, dst, rel, _ in res.new_edges:
        assert {src, dst} & set("ab") and {src, dst} & set("cd")
        assert rel == "calibrates"
        assert res.provenance[(src, dst)] == "backend-labeled"
    assert res.provenance[("a", "m")] == "shared-node"
    assert res.provenance[("a", "b")] == "input"
    again = aggregate(g1, g2, root, emb, backend, MessagePassingConfig(hidden_dim=4, top_k_edges=2))
    assert again.merged == res.merged
