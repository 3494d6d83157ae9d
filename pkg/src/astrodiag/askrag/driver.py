"""Layer-by-layer partition/aggregate orchestration across agent wordlists."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

from ..astrosight.pipeline import Pipeline
from ..backends import ChatBackend, EmbedBackend
from ..kg import EmbeddingStore, KnowledgeGraph, cosine_sim, json_number
from ..wordlist import RelevantWordlist, WordlistEntry
from .aggregate import MessagePassingConfig, aggregate
from .partition import PartitionConfig, match_keyword_to_node, partition_for_pairs

logger = logging.getLogger(__name__)

PARTITION = "partition"
AGGREGATE = "aggregate"


class DriverError(ValueError):
    pass


@dataclass(frozen=True)
class DriverConfig:
    gamma: float = 1.0
    beta: float | tuple[float, ...] = 0.0
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    aggregate: MessagePassingConfig = field(default_factory=MessagePassingConfig)
    one_based_layers: bool = False
    pair_scope: str = "all"

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise DriverError(f"gamma must be > 0, got {self.gamma}")
        betas = self.beta if isinstance(self.beta, tuple) else (self.beta,)
        if not betas:
            raise DriverError("beta must not be empty")
        if any(math.isnan(b) for b in betas):
            raise DriverError("beta entries must not be NaN")
        if self.pair_scope not in ("all", "adjacent"):
            raise DriverError(f"pair_scope must be 'all' or 'adjacent', got {self.pair_scope!r}")

    def beta_for(self, q: int) -> float:
        """Threshold of layer ``q``; a short list repeats its last entry."""
        if isinstance(self.beta, tuple):
            return self.beta[min(q, len(self.beta) - 1)]
        return self.beta


@dataclass(frozen=True)
class LayerDecision:
    layer_q: int
    agent_pair: tuple[str, str]
    theta: float
    beta: float
    action: str

    def to_dict(self) -> dict:
        return {
            "layer": self.layer_q,
            "pair": list(self.agent_pair),
            "theta": self.theta,
            "beta": json_number(self.beta),
            "action": self.action,
        }


@dataclass
class DriverResult:
    subgraphs: dict[str, KnowledgeGraph]
    decisions: list[LayerDecision]
    anchors: dict[str, list[str]]
    log: list[str] = field(default_factory=list)


def correlation_factor(
    u: WordlistEntry,
    v: WordlistEntry,
    q: int,
    gamma: float,
    embed: EmbedBackend | None = None,
    *,
    sim: float | None = None,
) -> float:
    """Score magnitude times (keyword similarity minus ``gamma * e**q``).

    The similarity is the unclamped cosine of the two keyword embeddings; pass
    ``sim`` directly to skip embedding.
    """
    if q < 0:
        raise ValueError("layer index must be >= 0")
    if sim is None:
        if embed is None:
            raise ValueError("need an embedding backend or an explicit sim")
        a, b = embed.embed([u.keyword, v.keyword])
        sim = cosine_sim(a, b)
    return math.hypot(u.score, v.score) * (sim - gamma * math.exp(q))


def decide(theta: float, beta_q: float) -> str:
    return PARTITION if beta_q > theta else AGGREGATE


def _agent_pairs(pipeline: Pipeline, scope: str) -> list[tuple[str, str]]:
    if scope == "adjacent":
        ids = pipeline.agent_ids
        return sorted(tuple(sorted(p)) for p in zip(ids, ids[1:]))
    return list(combinations(sorted(pipeline.agent_ids), 2))


def build_agent_subgraphs(
    root: KnowledgeGraph,
    embeds: EmbeddingStore,
    wordlists: Sequence[RelevantWordlist],
    pipeline: Pipeline,
    cfg: DriverConfig,
    chat: ChatBackend,
    embed: EmbedBackend,
) -> DriverResult:
    by_agent: Mapping[str, RelevantWordlist] = {w.agent_id: w for w in wordlists}
    missing = [a for a in pipeline.agent_ids if a not in by_agent]
    if missing:
        raise DriverError(f"no wordlist for agents: {', '.join(missing)}")
    log: list[str] = []

    # initial partition per agent
    subgraphs: dict[str, KnowledgeGraph] = {}
    anchors: dict[str, list[str]] = {}
    for agent_id in pipeline.agent_ids:
        matched = [
            match_keyword_to_node(e.keyword, root, embeds, embed) for e in by_agent[agent_id].layers
        ]
        anchors[agent_id] = list(dict.fromkeys(matched))
        pairs = list(combinations(sorted(anchors[agent_id]), 2))
        sub = partition_for_pairs(root, embeds, pairs, cfg.partition)
        # keep every anchor even when no path reaches it
        extra = [n for n in anchors[agent_id] if n not in sub]
        if extra:
            sub = root.subgraph(sub.node_ids + extra, [e.key for e in sub.edges])
        subgraphs[agent_id] = sub

    vec_cache: dict[str, object] = {}

    def keyword_sim(a: str, b: str) -> float:
        todo = [k for k in (a, b) if k not in vec_cache]
        if todo:
            for k, v in zip(todo, embed.embed(todo)):
                vec_cache[k] = v
        return cosine_sim(vec_cache[a], vec_cache[b])

    decisions: list[LayerDecision] = []
    depth = max(len(w.layers) for w in by_agent.values())
    for q in range(depth):
        q_eff = q + 1 if cfg.one_based_layers else q
        for i, j in _agent_pairs(pipeline, cfg.pair_scope):
            u, v = by_agent[i].layer(q), by_agent[j].layer(q)
            if u is None or v is None:
                log.append(f"layer {q}: pair ({i}, {j}) skipped, wordlist too short")
                continue
            theta = correlation_factor(
                u, v, q_eff, cfg.gamma, sim=keyword_sim(u.keyword, v.keyword)
            )
            beta = cfg.beta_for(q)
            action = decide(theta, beta)
            decisions.append(LayerDecision(q, (i, j), theta, beta, action))
            if action == AGGREGATE and subgraphs[i] is not subgraphs[j]:
                result = aggregate(subgraphs[i], subgraphs[j], root, embeds, chat, cfg.aggregate)
                log.extend(result.warnings)
                subgraphs[i] = subgraphs[j] = result.merged
    return DriverResult(subgraphs, decisions, anchors, log)


def replay(decisions: Sequence[LayerDecision]) -> bool:
    """True if every logged action follows from its logged theta and beta."""
    return all(d.action == decide(d.theta, d.beta) for d in decisions)
