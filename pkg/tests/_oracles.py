"""Independent reference computations shared by the unit and acceptance tests."""

from __future__ import annotations

import networkx as nx
import numpy as np

from astrodiag.astrosight.pipeline import AgentReply, AgentSpec, DetectedError, Pipeline
from astrodiag.backends import fenced

from _util import reply, weight


def reference_propagation(graph, embeds, start, mu, max_hops):
    """Straight transcription of the update rule using networkx for BFS layers."""
    g = nx.Graph()
    g.add_nodes_from(graph.node_ids)
    g.add_edges_from((e.src, e.dst) for e in graph.edges)
    dist = nx.single_source_shortest_path_length(g, start, cutoff=max_hops)
    order = sorted(dist, key=lambda n: (dist[n], n))
    r = {n: 0.0 for n in graph.node_ids}
    r[start] = 1.0
    done = {start}
    for node in order[1:]:
        total = 0.0
        for nb in g.neighbors(node):
            if nb in done:
                a, b = embeds[node], embeds[nb]
                na, nb_ = np.linalg.norm(a), np.linalg.norm(b)
                cos = 0.0 if na == 0 or nb_ == 0 else float(a @ b) / (na * nb_)
                total += mu * r[nb] / g.degree(nb) + min(1.0, max(0.0, cos))
        r[node] = total
        done.add(node)
    return r


def plain_adjacency(graph) -> np.ndarray:
    g = nx.Graph()
    g.add_nodes_from(graph.node_ids)
    g.add_edges_from((e.src, e.dst) for e in graph.edges)
    return nx.to_numpy_array(g, nodelist=graph.node_ids)


def dense_smoothing(adjacency: np.ndarray, x: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """Two propagation rounds with the renormalized adjacency, written from scratch."""
    a = adjacency + np.eye(len(adjacency))
    d = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
    a_hat = d @ a @ d
    return a_hat @ np.maximum(a_hat @ x @ w1, 0.0) @ w2


def origin(agent_id: str, summary: str = "walking noise") -> tuple[DetectedError, AgentReply]:
    r = AgentReply(agent_id, "diagonal streaks", True, summary, 0.95, "scripted")
    return DetectedError(agent_id, summary), r


def random_scenario(seed: int, n: int):
    rng = np.random.default_rng(seed)
    agents = []
    for i in range(n):
        preds = tuple(f"a{j}" for j in range(i) if rng.uniform() < 0.5)
        stage = "preparation" if i < n // 3 else ("shooting" if i < 2 * n // 3 else "post_processing")
        agents.append(AgentSpec(f"a{i}", stage, f"p{i}", i, preds))
    script = {}
    for i in range(n):
        script[f"reexamine:a{i}"] = reply(round(float(rng.uniform()), 3))
        script[f"evaluate_edge:coordinator:a{i}"] = weight(round(float(rng.uniform()), 3))
    script["resolve_conflict"] = fenced(
        {"assessment": "revised", "confidence": round(float(rng.uniform()), 3), "weight": round(float(rng.uniform()), 3)}
    )
    script["aggregate"] = fenced({"narrative": "n"})
    return Pipeline(tuple(agents)), script
