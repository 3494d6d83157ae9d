"""Root knowledge-graph construction from documents through the chat backend.

The extraction prompt is a thin project-defined contract; it is not tuned or
validated against any reference extraction pipeline.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Sequence

from .askrag.aggregate import join_on_shared_nodes
from .backends import ChatBackend, ChatRequest, EmbedBackend, RequestTag, ask_structured
from .kg import EmbeddingStore, KgEdge, KgNode, KnowledgeGraph

logger = logging.getLogger(__name__)

DOC_SUFFIXES = (".txt", ".md")

EXTRACT_SYSTEM = (
    "Extract a knowledge graph about astrophotography from the document. Entities get a "
    "short lowercase id, a label and a one-sentence description; relations join two "
    "entity ids with a short label. "
    'Reply with a fenced ```json block: {"nodes": [{"id", "label", "text"}], '
    '"edges": [{"src", "dst", "relation"}]}.'
)


def slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def read_documents(directory: str | Path) -> list[tuple[str, str]]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d} is not a directory")
    docs = [
        (p.name, p.read_text(encoding="utf-8"))
        for p in sorted(d.iterdir())
        if p.is_file() and p.suffix.lower() in DOC_SUFFIXES
    ]
    return [(name, text) for name, text in docs if text.strip()]


def _graph_from_reply(name: str, parsed: dict) -> KnowledgeGraph:
    nodes: dict[str, KgNode] = {}
    for raw in parsed.get("nodes", []):
        if not isinstance(raw, dict) or not raw.get("label"):
            logger.warning("%s: skipping node without label: %r", name, raw)
            continue
        nid = str(raw.get("id") or slug(raw["label"]))
        nodes.setdefault(nid, KgNode(nid, str(raw["label"]), str(raw.get("text", ""))))
    edges: dict[tuple[str, str], KgEdge] = {}
    for raw in parsed.get("edges", []):
        if not isinstance(raw, dict):
            continue
        src, dst = str(raw.get("src", "")), str(raw.get("dst", ""))
        if src not in nodes or dst not in nodes or src == dst:
            logger.warning("%s: dropping edge %s-%s", name, src, dst)
            continue
        w = raw.get("weight", 1.0)
        w = min(1.0, max(0.0, float(w))) if isinstance(w, (int, float)) else 1.0
        edge = KgEdge(src, dst, str(raw.get("relation", "")), w)
        edges.setdefault(edge.key, edge)
    return KnowledgeGraph(tuple(nodes.values()), tuple(edges.values()))


def build_root_graph(documents: Sequence[tuple[str, str]], chat: ChatBackend, retries: int = 3) -> KnowledgeGraph:
    if not documents:
        raise ValueError("no documents to extract from")
    graph = KnowledgeGraph()
    for name, text in documents:
        request = ChatRequest(
            system=EXTRACT_SYSTEM,
            messages=(("user", text),),
            max_tokens=4096,
            tag=RequestTag("kg_extract", name),
        )
        reply = ask_structured(chat, request, {"nodes": "list", "edges": "list"}, retries=retries)
        if reply.degraded:
            logger.warning("%s: extraction reply unusable (%s)", name, reply.problem)
            continue
        graph = join_on_shared_nodes(graph, _graph_from_reply(name, reply.parsed))
    return graph


def embed_graph(graph: KnowledgeGraph, embed: EmbedBackend) -> EmbeddingStore:
    """Node vectors are embeddings of node labels, so keywords match labels directly."""
    ids = graph.node_ids
    vectors = embed.embed([graph.node(n).label for n in ids]) if ids else []
    dim = len(vectors[0]) if vectors else getattr(embed, "dim", 1)
    return EmbeddingStore(embed.model_tag, dim, dict(zip(ids, vectors)))
