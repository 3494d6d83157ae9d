"""Flow-based partitioning of the root graph into an agent subgraph.

Resource spreads outward from an anchor node with decay ``mu``; every simple
path to a second anchor is scored by the mean resource along its edges, and
the best paths per anchor pair are kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .. import kernels
from ..backends import EmbedBackend
from ..kg import EmbeddingStore, KnowledgeGraph, cosine_sim, edge_key

logger = logging.getLogger(__name__)


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionConfig:
    mu: float = 0.8
    top_k_paths: int = 5
    max_hops: int = 4

    def __post_init__(self) -> None:
        if not (0.0 < self.mu <= 1.0):
            raise PartitionError(f"mu must be in (0, 1], got {self.mu}")
        if self.top_k_paths < 1:
            raise PartitionError(f"top_k_paths must be >= 1, got {self.top_k_paths}")
        if self.max_hops < 1:
            raise PartitionError(f"max_hops must be >= 1, got {self.max_hops}")


@dataclass(frozen=True)
class ResourceMap:
    start_id: str
    values: dict[str, float]

    def __getitem__(self, node_id: str) -> float:
        return self.values.get(node_id, 0.0)


@dataclass(frozen=True)
class CandidatePath:
    node_ids: tuple[str, ...]
    reliability: float

    def sort_key(self) -> tuple:
        return (-self.reliability, len(self.node_ids), self.node_ids)


class CsrGraph:
    """Index-based adjacency of a :class:`KnowledgeGraph` for the kernels."""

    def __init__(self, graph: KnowledgeGraph) -> None:
        self.graph = graph
        self.ids = graph.node_ids
        self.pos = {nid: i for i, nid in enumerate(self.ids)}
        indptr = [0]
        indices: list[int] = []
        for nid in self.ids:
            indices.extend(self.pos[m] for m in graph.neighbors(nid))
            indptr.append(len(indices))
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)

    def edge_sims(self, embeds: EmbeddingStore, active: Iterable[int]) -> np.ndarray:
        """Clamped [0, 1] cosine per CSR slot, for slots joining two active nodes."""
        active = set(active)
        missing = [self.ids[i] for i in sorted(active) if self.ids[i] not in embeds]
        if missing:
            raise PartitionError(f"missing embedding for node {missing[0]!r}")
        sims = np.zeros(len(self.indices), dtype=np.float64)
        for i in active:
            for k in range(self.indptr[i], self.indptr[i + 1]):
                j = int(self.indices[k])
                if j in active:
                    s = cosine_sim(embeds[self.ids[i]], embeds[self.ids[j]])
                    sims[k] = max(0.0, s)
        return sims


def _propagate_idx(csr: CsrGraph, embeds: EmbeddingStore, start: int, cfg: PartitionConfig) -> np.ndarray:
    order = kernels.settle_order(csr.indptr, csr.indices, start, cfg.max_hops)
    sims = csr.edge_sims(embeds, order)
    return kernels.propagate(csr.indptr, csr.indices, sims, start, cfg.mu, cfg.max_hops)


def propagate_resource(
    graph: KnowledgeGraph,
    embeds: EmbeddingStore,
    start: str,
    cfg: PartitionConfig | None = None,
) -> ResourceMap:
    cfg = cfg or PartitionConfig()
    if start not in graph:
        raise PartitionError(f"start node {start!r} not in graph")
    csr = CsrGraph(graph)
    values = _propagate_idx(csr, embeds, csr.pos[start], cfg)
    return ResourceMap(start, {nid: float(values[i]) for i, nid in enumerate(csr.ids)})


def path_reliability(
    path: Sequence[str], resources: ResourceMap, graph: KnowledgeGraph | None = None
) -> float:
    """Sum of node resources along ``path`` divided by its edge count."""
    if len(path) < 2:
        raise PartitionError("a path needs at least two nodes")
    if graph is not None:
        for a, b in zip(path, path[1:]):
            if not graph.has_edge(a, b):
                raise PartitionError(f"{a!r}-{b!r} is not an edge")
    total = 0.0
    for node in path:
        total += resources[node]
    return total / (len(path) - 1)


def rank_paths(
    graph: KnowledgeGraph,
    embeds: EmbeddingStore,
    source: str,
    target: str,
    cfg: PartitionConfig | None = None,
    *,
    _csr: CsrGraph | None = None,
    _values: np.ndarray | None = None,
) -> list[CandidatePath]:
    """Every simple source->target path within ``max_hops``, best first."""
    cfg = cfg or PartitionConfig()
    csr = _csr or CsrGraph(graph)
    s, t = csr.pos[source], csr.pos[target]
    values = _values if _values is not None else _propagate_idx(csr, embeds, s, cfg)
    paths = kernels.simple_paths(csr.indptr, csr.indices, s, t, cfg.max_hops)
    scores = kernels.path_reliabilities(paths, values)
    ranked = [
        CandidatePath(tuple(csr.ids[i] for i in p), float(score))
        for p, score in zip(paths, scores)
    ]
    ranked.sort(key=CandidatePath.sort_key)
    return ranked


def partition_for_pairs(
    graph: KnowledgeGraph,
    embeds: EmbeddingStore,
    anchor_pairs: Iterable[tuple[str, str]],
    cfg: PartitionConfig | None = None,
) -> KnowledgeGraph:
    """Union of the ``top_k_paths`` most reliable paths of each anchor pair."""
    cfg = cfg or PartitionConfig()
    pairs = list(dict.fromkeys(anchor_pairs))
    for s, t in pairs:
        for a in (s, t):
            if a not in graph:
                raise PartitionError(f"anchor {a!r} not in graph")
    csr = CsrGraph(graph)
    flows: dict[int, np.ndarray] = {}
    node_ids: set[str] = set()
    edge_keys: set[tuple[str, str]] = set()
    for s, t in pairs:
        if s == t:
            continue
        si = csr.pos[s]
        if si not in flows:
            flows[si] = _propagate_idx(csr, embeds, si, cfg)
        kept = rank_paths(graph, embeds, s, t, cfg, _csr=csr, _values=flows[si])[: cfg.top_k_paths]
        if not kept:
            logger.warning("no path between %r and %r within %d hops", s, t, cfg.max_hops)
        for path in kept:
            node_ids.update(path.node_ids)
            edge_keys.update(edge_key(a, b) for a, b in zip(path.node_ids, path.node_ids[1:]))
    return graph.subgraph(node_ids, edge_keys)


def match_keyword_to_node(
    keyword: str,
    graph: KnowledgeGraph,
    embeds: EmbeddingStore,
    embed_backend: EmbedBackend,
) -> str:
    """Node whose embedding is most similar to the keyword's; ties to smaller id."""
    if len(graph) == 0:
        raise PartitionError("cannot match a keyword against an empty graph")
    (query,) = embed_backend.embed([keyword])
    best_id, best = None, -np.inf
    for nid in graph.node_ids:
        if nid not in embeds:
            continue
        s = cosine_sim(query, embeds[nid])
        if s > best:
            best_id, best = nid, s
    return best_id if best_id is not None else graph.node_ids[0]
