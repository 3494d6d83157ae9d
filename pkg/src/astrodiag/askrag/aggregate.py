"""Merging two agent subgraphs.

The merge joins the graphs on shared node ids, smooths node features with two
rounds of graph-convolution style message passing, links the most similar
cross-graph node pairs and asks the chat backend to name each new relation.

The message-passing weights are never trained: they are drawn from a seeded
generator and act as a fixed, structure-aware smoother.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..backends import ChatBackend, ChatRequest, RequestTag, ask_structured
from ..kg import EmbeddingStore, GraphValidationError, KgEdge, KgNode, KnowledgeGraph, cosine_sim, edge_key

logger = logging.getLogger(__name__)

FALLBACK_RELATION = "related-to"

EDGE_LABEL_SYSTEM = (
    "You maintain a knowledge graph about astrophotography. Given two entities, "
    "name the relation from the first to the second in two to four words. "
    'Reply with a fenced ```json block: {"relation": "<label>"}.'
)


@dataclass(frozen=True)
class MessagePassingConfig:
    hidden_dim: int = 64
    seed: int = 0
    dropout_rate: float = 0.0
    top_k_edges: int = 5

    def __post_init__(self) -> None:
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.top_k_edges < 1:
            raise ValueError("top_k_edges must be >= 1")


@dataclass
class AggregationResult:
    merged: KnowledgeGraph
    new_edges: list[tuple[str, str, str, float]] = field(default_factory=list)
    provenance: dict[tuple[str, str], str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def join_on_shared_nodes(g1: KnowledgeGraph, g2: KnowledgeGraph) -> KnowledgeGraph:
    nodes: dict[str, KgNode] = {n.id: n for n in g1.nodes}
    for n in g2.nodes:
        mine = nodes.get(n.id)
        if mine is None:
            nodes[n.id] = n
            continue
        if mine.label != n.label:
            raise GraphValidationError(
                f"node {n.id!r} labeled {mine.label!r} and {n.label!r}", [n.id]
            )
        if n.text and n.text not in mine.text:
            text = f"{mine.text}\n{n.text}" if mine.text else n.text
            nodes[n.id] = KgNode(n.id, n.label, text)
    edges: dict[tuple[str, str], KgEdge] = {e.key: e for e in g1.edges}
    for e in g2.edges:
        edges.setdefault(e.key, e)
    return KnowledgeGraph(tuple(nodes.values()), tuple(edges.values()))


def normalized_adjacency(graph: KnowledgeGraph) -> np.ndarray:
    """Dense D^-1/2 (A + I) D^-1/2 in node-id order. Used by tests as a reference."""
    ids = graph.node_ids
    pos = {nid: i for i, nid in enumerate(ids)}
    a = np.eye(len(ids))
    for e in graph.edges:
        a[pos[e.src], pos[e.dst]] = a[pos[e.dst], pos[e.src]] = 1.0
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def projection_weights(in_dim: int, cfg: MessagePassingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Glorot-uniform weights for both rounds, drawn from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_dim
    lim1 = np.sqrt(6.0 / (in_dim + h))
    w1 = rng.uniform(-lim1, lim1, size=(in_dim, h))
    lim2 = np.sqrt(6.0 / (h + h))
    w2 = rng.uniform(-lim2, lim2, size=(h, h))
    return w1, w2


def _propagate(graph: KnowledgeGraph, feats: np.ndarray, pos: Mapping[str, int]) -> np.ndarray:
    # self-loop plus neighbors, each message scaled by 1/sqrt(d_i d_j), d counting the self-loop
    deg = np.ones(len(pos))
    src, dst = [], []
    for e in graph.edges:
        i, j = pos[e.src], pos[e.dst]
        src += [i, j]
        dst += [j, i]
        deg[i] += 1
        deg[j] += 1
    scale = 1.0 / np.sqrt(deg)
    out = feats * (scale * scale)[:, None]
    if src:
        s, t = np.asarray(src), np.asarray(dst)
        np.add.at(out, t, feats[s] * (scale[s] * scale[t])[:, None])
    return out


def smooth_embeddings(
    graph: KnowledgeGraph, embeds: EmbeddingStore, cfg: MessagePassingConfig | None = None
) -> EmbeddingStore:
    """Two message-passing rounds with a rectifier between them; dropout is off."""
    cfg = cfg or MessagePassingConfig()
    ids = graph.node_ids
    for nid in ids:
        if nid not in embeds:
            raise GraphValidationError(f"node {nid!r} has no input embedding", [nid])
    pos = {nid: i for i, nid in enumerate(ids)}
    w1, w2 = projection_weights(embeds.dim, cfg)
    if not ids:
        return EmbeddingStore(f"smoothed:{embeds.model_tag}", cfg.hidden_dim, {})
    x = np.stack([embeds[nid] for nid in ids])
    h = np.maximum(_propagate(graph, x, pos) @ w1, 0.0)
    h = _propagate(graph, h, pos) @ w2
    return EmbeddingStore(
        f"smoothed:{embeds.model_tag}", cfg.hidden_dim, {nid: h[pos[nid]] for nid in ids}
    )


def link_by_similarity(
    merged: KnowledgeGraph,
    smoothed: EmbeddingStore,
    side_of: Mapping[str, int],
    cfg: MessagePassingConfig | None = None,
) -> list[tuple[str, str, float]]:
    """Top-K most similar non-adjacent pairs with one node from each side.

    ``side_of`` maps a node to 1 or 2; nodes present in both inputs are left
    out of it (or mapped to 0) and never form candidates.
    """
    cfg = cfg or MessagePassingConfig()
    left = sorted(n for n in merged.node_ids if side_of.get(n) == 1)
    right = sorted(n for n in merged.node_ids if side_of.get(n) == 2)
    cands = []
    for a in left:
        for b in right:
            if merged.has_edge(a, b):
                continue
            src, dst = edge_key(a, b)
            cands.append((src, dst, cosine_sim(smoothed[a], smoothed[b])))
    cands.sort(key=lambda c: (-c[2], c[0], c[1]))
    return cands[: cfg.top_k_edges]


def label_new_edges(
    pairs: Sequence[tuple[str, str, float]],
    root: KnowledgeGraph,
    chat: ChatBackend,
    *,
    graph: KnowledgeGraph | None = None,
    warnings: list[str] | None = None,
    retries: int = 3,
) -> list[KgEdge]:
    """Relation labels for new links: copied from ``root`` when possible, else asked for.

    Node texts are read from ``graph`` (defaults to ``root``).
    """
    lookup = graph or root
    out = []
    for src, dst, sim in pairs:
        weight = min(1.0, max(0.0, sim))
        if src in root and dst in root and root.has_edge(src, dst):
            out.append(KgEdge(src, dst, root.edge(src, dst).relation, weight))
            continue
        a, b = lookup.node(src), lookup.node(dst)
        request = ChatRequest(
            system=EDGE_LABEL_SYSTEM,
            messages=(
                (
                    "user",
                    f"Entity A: {a.label}\n{a.text}\n\nEntity B: {b.label}\n{b.text}",
                ),
            ),
            tag=RequestTag("edge_label", src, (dst,)),
        )
        reply = ask_structured(chat, request, {"relation": "str"}, retries=retries)
        relation = reply.parsed.get("relation", "").strip() if not reply.degraded else ""
        if not relation:
            msg = f"edge {src}-{dst}: no usable relation label, using {FALLBACK_RELATION!r}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            relation = FALLBACK_RELATION
        out.append(KgEdge(src, dst, relation, weight))
    return out


def aggregate(
    g1: KnowledgeGraph,
    g2: KnowledgeGraph,
    root: KnowledgeGraph,
    embeds: EmbeddingStore,
    chat: ChatBackend,
    cfg: MessagePassingConfig | None = None,
) -> AggregationResult:
    cfg = cfg or MessagePassingConfig()
    joined = join_on_shared_nodes(g1, g2)
    provenance = {e.key: "input" for e in joined.edges}
    ids1, ids2 = set(g1.node_ids), set(g2.node_ids)
    side_of = {n: 1 for n in ids1 - ids2}
    side_of.update({n: 2 for n in ids2 - ids1})
    for n in ids1 & ids2:
        for m in joined.neighbors(n):
            provenance[edge_key(n, m)] = "shared-node"

    smoothed = smooth_embeddings(joined, embeds, cfg)
    pairs = link_by_similarity(joined, smoothed, side_of, cfg)
    warnings: list[str] = []
    labeled = label_new_edges(pairs, root, chat, graph=joined, warnings=warnings)
    for edge in labeled:
        in_root = edge.src in root and edge.dst in root and root.has_edge(edge.src, edge.dst)
        provenance[edge.key] = "similarity" if in_root else "backend-labeled"
    merged = KnowledgeGraph(joined.nodes, joined.edges + tuple(labeled))
    new_edges = [(e.src, e.dst, e.relation, s) for e, (_, _, s) in zip(labeled, pairs)]
    return AggregationResult(merged, new_edges, provenance, warnings)
