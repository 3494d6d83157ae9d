from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from astrodiag.askrag.driver import (
    AGGREGATE,
    PARTITION,
    DriverConfig,
    DriverError,
    LayerDecision,
    build_agent_subgraphs,
    correlation_factor,
    decide,
    replay,
)
from astrodiag.askrag.partition import PartitionConfig, partition_for_pairs
from astrodiag.astrosight.pipeline import AgentSpec, Pipeline
from astrodiag.backends import MockBackend
from astrodiag.kg import KgEdge, KgNode, KnowledgeGraph
from astrodiag.kgbuild import embed_graph
from astrodiag.wordlist import RelevantWordlist, WordlistEntry

E = WordlistEntry


def test_theta_worked_example():
    assert abs(correlation_factor(E("u", 0.6), E("v", 0.8), 0, 0.5, sim=0.9) - 0.4) <= 1e-12


def test_theta_zero_when_similarity_balances_layer_term():
    for q in range(4):
        g = 0.1
        assert correlation_factor(E("u", 0.3), E("v", 0.9), q, g, sim=g * math.exp(q)) == 0.0


def test_theta_vanishes_with_scores():
    assert abs(correlation_factor(E("u", 1e-4), E("v", 1e-4), 0, 1.0, sim=-1.0)) < 1e-3


def test_theta_uses_unclamped_embedding_cosine():
    backend = MockBackend(embeddings={"u": [1.0, 0.0], "v": [-1.0, 0.0]}, dim=2)
    got = correlation_factor(E("u", 0.6), E("v", 0.8), 0, 1.0, backend)
    assert got == pytest.approx(-2.0)


@given(
    st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(-1.0, 1.0), st.floats(0.01, 3.0)
)
def test_theta_decreasing_in_layer_and_symmetric(cu, cv, sim, gamma):
    thetas = [correlation_factor(E("u", cu), E("v", cv), q, gamma, sim=sim) for q in range(6)]
    assert all(a > b for a, b in zip(thetas, thetas[1:]))
    assert correlation_factor(E("v", cv), E("u", cu), 2, gamma, sim=sim) == thetas[2]


def test_decide_rule():
    assert decide(0.4, 0.0) == AGGREGATE
    assert decide(-2.0, 0.0) == PARTITION
    assert decide(0.25, 0.25) == AGGREGATE


def test_config_validation():
    with pytest.raises(DriverError):
        DriverConfig(gamma=0.0)
    with pytest.raises(DriverError):
        DriverConfig(beta=float("nan"))
    with pytest.raises(DriverError):
        DriverConfig(pair_scope="nearest")
    cfg = DriverConfig(beta=(0.1, 0.2))
    assert [cfg.beta_for(q) for q in range(4)] == [0.1, 0.2, 0.2, 0.2]


def test_replay_detects_tampering():
    ok = LayerDecision(0, ("a", "b"), 0.4, 0.0, AGGREGATE)
    assert replay([ok])
    assert not replay([LayerDecision(0, ("a", "b"), 0.4, 0.0, PARTITION)])


# -- layered procedure on a six-node root -------------------------------------------

LABELS = ["dark frame", "flat frame", "bias frame", "guide star", "mount", "polar alignment"]


def six_node_root() -> KnowledgeGraph:
    nodes = tuple(KgNode(f"n{i}", label) for i, label in enumerate(LABELS))
    edges = (
        KgEdge("n0", "n1", "pairs-with"),
        KgEdge("n1", "n2", "pairs-with"),
        KgEdge("n2", "n3", "unrelated"),
        KgEdge("n3", "n4", "tracked-by"),
        KgEdge("n4", "n5", "requires"),
    )
    return KnowledgeGraph(nodes, edges)


def two_agents() -> Pipeline:
    return Pipeline(
        (
            AgentSpec("calib", "shooting", "calibration frames", 0),
            AgentSpec("guide", "shooting", "guiding", 1, ("calib",)),
        )
    )


def run(root, wordlists, beta, pipeline=None):
    backend = MockBackend(dim=16)
    embeds = embed_graph(root, backend)
    cfg = DriverConfig(beta=beta, partition=PartitionConfig(top_k_paths=2))
    return build_agent_subgraphs(root, embeds, wordlists, pipeline or two_agents(), cfg, backend, backend), embeds


def test_single_agent_keeps_initial_partition():
    root = six_node_root()
    pipe = Pipeline((AgentSpec("calib", "shooting", "calibration frames", 0),))
    wl = [RelevantWordlist("calib", (E("dark frame", 1.0), E("bias frame", 0.5)))]
    res, embeds = run(root, wl, 0.0, pipe)
    assert res.decisions == []
    want = partition_for_pairs(root, embeds, [("n0", "n2")], PartitionConfig(top_k_paths=2))
    assert res.subgraphs["calib"] == want
    assert res.anchors == {"calib": ["n0", "n2"]}


def test_infinite_beta_partitions_everywhere():
    root = six_node_root()
    wl = [
        RelevantWordlist("calib", (E("dark frame", 1.0), E("bias frame", 0.6))),
        RelevantWordlist("guide", (E("guide star", 0.9), E("polar alignment", 0.4))),
    ]
    res, _ = run(root, wl, float("inf"))
    assert [d.action for d in res.decisions] == [PARTITION, PARTITION]
    assert set(res.subgraphs["calib"].node_ids) == {"n0", "n1", "n2"}
    assert set(res.subgraphs["guide"].node_ids) == {"n3", "n4", "n5"}


def test_identical_wordlists_aggregate_at_layer_zero():
    root = six_node_root()
    entries = (E("dark frame", 1.0), E("bias frame", 0.6))
    wl = [RelevantWordlist("calib", entries), RelevantWordlist("guide", entries)]
    res, _ = run(root, wl, float("-inf"))
    first = res.decisions[0]
    assert (first.layer_q, first.agent_pair, first.action) == (0, ("calib", "guide"), AGGREGATE)
    assert res.subgraphs["calib"] is res.subgraphs["guide"]
    assert replay(res.decisions)


def test_aggregation_adds_only_root_nodes():
    root = six_node_root()
    wl = [
        RelevantWordlist("calib", (E("dark frame", 1.0), E("bias frame", 0.6))),
        RelevantWordlist("guide", (E("guide star", 0.9), E("polar alignment", 0.4))),
    ]
    res, _ = run(root, wl, float("-inf"))
    merged = res.subgraphs["calib"]
    assert res.subgraphs["guide"] is merged
    assert set(merged.node_ids) == set(root.node_ids)
    # both initial partitions survive, plus similarity links across them
    for a, b in [("n0", "n1"), ("n1", "n2"), ("n3", "n4"), ("n4", "n5")]:
        assert merged.has_edge(a, b)
    assert len(merged.edges) > 4
    assert all(d.action == AGGREGATE for d in res.decisions)


def test_short_wordlist_pair_skipped():
    root = six_node_root()
    wl = [
        RelevantWordlist("calib", (E("dark frame", 1.0), E("bias frame", 0.6))),
        RelevantWordlist("guide", (E("guide star", 0.9),)),
    ]
    res, _ = run(root, wl, 0.0)
    assert [d.layer_q for d in res.decisions] == [0]
    assert any("skipped" in line for line in res.log)


def test_missing_wordlist_rejected():
    root = six_node_root()
    with pytest.raises(DriverError, match="guide"):
        run(root, [RelevantWordlist("calib", (E("mount", 1.0),))], 0.0)


def test_adjacent_scope_only_compares_neighbors():
    pipe = Pipeline(tuple(AgentSpec(f"a{i}", "shooting", f"p{i}", i) for i in range(3)))
    root = six_node_root()
    wl = [RelevantWordlist(f"a{i}", (E(LABELS[i], 1.0),)) for i in range(3)]
    backend = MockBackend(dim=16)
    cfg = DriverConfig(beta=float("inf"), pair_scope="adjacent")
    res = build_agent_subgraphs(root, embed_graph(root, backend), wl, pipe, cfg, backend, backend)
    assert [d.agent_pair for d in res.decisions] == [("a0", "a1"), ("a1", "a2")]


def test_decision_dict_shape():
    d = LayerDecision(1, ("a", "b"), -0.5, float("inf"), PARTITION).to_dict()
    assert d == {"layer": 1, "pair": ["a", "b"], "theta": -0.5, "beta": "inf", "action": "partition"}
    assert np.isfinite(d["theta"])
