"""Knowledge-graph data model, embedding store and JSON serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class GraphError(ValueError):
    """Base class for graph loading/validation failures."""


class GraphSchemaError(GraphError):
    """A kg.json / embeddings.json document does not match its schema."""

    def __init__(self, field_path: str, message: str) -> None:
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


class GraphValidationError(GraphError):
    """Structural invariant violated (duplicate id, dangling edge, ...)."""

    def __init__(self, message: str, offenders: Iterable[object] = ()) -> None:
        super().__init__(message)
        self.offenders = list(offenders)


@dataclass(frozen=True)
class KgNode:
    id: str
    label: str
    text: str = ""


@dataclass(frozen=True)
class KgEdge:
    src: str
    dst: str
    relation: str = ""
    weight: float = 1.0

    @property
    def key(self) -> tuple[str, str]:
        return edge_key(self.src, self.dst)


def edge_key(a: str, b: str) -> tuple[str, str]:
    """Canonical unordered key of an edge."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class KnowledgeGraph:
    """Undirected labeled graph.

    Nodes are kept sorted by id and edges by their canonical ``(src, dst)``
    key, so iteration order is deterministic. Instances are validated on
    construction and treated as immutable afterwards.
    """

    nodes: tuple[KgNode, ...] = ()
    edges: tuple[KgEdge, ...] = ()
    _index: dict[str, KgNode] = field(init=False, repr=False, compare=False)
    _adj: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _edge_map: dict[tuple[str, str], KgEdge] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        edges = tuple(sorted(self.edges, key=lambda e: e.key))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

        index: dict[str, KgNode] = {}
        dupes = []
        for node in nodes:
            if not node.id:
                raise GraphValidationError("node id must be non-empty")
            if not node.label:
                raise GraphValidationError(f"node {node.id!r} has empty label", [node.id])
            if node.id in index:
                dupes.append(node.id)
            index[node.id] = node
        if dupes:
            raise GraphValidationError(f"duplicate node ids: {dupes}", dupes)

        adj: dict[str, list[str]] = {nid: [] for nid in index}
        edge_map: dict[tuple[str, str], KgEdge] = {}
        for e in edges:
            missing = [x for x in (e.src, e.dst) if x not in index]
            if missing:
                raise GraphValidationError(
                    f"edge {e.src!r}-{e.dst!r} references missing node(s) {missing}",
                    missing,
                )
            if e.src == e.dst:
                raise GraphValidationError(f"self-loop on {e.src!r}", [e.src])
            if not (0.0 <= e.weight <= 1.0) or math.isnan(e.weight):
                raise GraphValidationError(
                    f"edge {e.src!r}-{e.dst!r} weight {e.weight} outside [0,1]",
                    [e.key],
                )
            if e.key in edge_map:
                raise GraphValidationError(f"duplicate edge {e.key}", [e.key])
            edge_map[e.key] = e
            adj[e.src].append(e.dst)
            adj[e.dst].append(e.src)

        object.__setattr__(self, "_index", index)
        object.__setattr__(
            self, "_adj", {k: tuple(sorted(v)) for k, v in adj.items()}
        )
        object.__setattr__(self, "_edge_map", edge_map)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._index

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> KgNode:
        return self._index[node_id]

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        return self._adj[node_id]

    def has_edge(self, a: str, b: str) -> bool:
        return edge_key(a, b) in self._edge_map

    def edge(self, a: str, b: str) -> KgEdge:
        return self._edge_map[edge_key(a, b)]

    def subgraph(self, node_ids: Iterable[str], edge_keys: Iterable[tuple[str, str]]) -> KnowledgeGraph:
        keep = set(node_ids)
        return KnowledgeGraph(
            nodes=tuple(self._index[n] for n in keep),
            edges=tuple(self._edge_map[edge_key(*k)] for k in set(edge_keys)),
        )

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "label": n.label, "text": n.text} for n in self.nodes],
            "edges": [
                {
                    "src": e.key[0],
                    "dst": e.key[1],
                    "relation": e.relation,
                    "weight": e.weight,
                }
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> KnowledgeGraph:
        if not isinstance(data, Mapping):
            raise GraphSchemaError("$", "expected an object")
        nodes = []
        for i, raw in enumerate(_require_list(data, "nodes")):
            where = f"nodes[{i}]"
            nodes.append(
                KgNode(
                    id=_require_str(raw, "id", where),
                    label=_require_str(raw, "label", where),
                    text=_require_str(raw, "text", where, default=""),
                )
            )
        edges = []
        for i, raw in enumerate(_require_list(data, "edges")):
            where = f"edges[{i}]"
            weight = raw.get("weight", 1.0) if isinstance(raw, Mapping) else None
            if isinstance(weight, bool) or not isinstance(weight, (int, float)):
                raise GraphSchemaError(f"{where}.weight", "expected a number")
            edges.append(
                KgEdge(
                    src=_require_str(raw, "src", where),
                    dst=_require_str(raw, "dst", where),
                    relation=_require_str(raw, "relation", where, default=""),
                    weight=float(weight),
                )
            )
        return cls(nodes=tuple(nodes), edges=tuple(edges))


def _require_list(data: Mapping, key: str) -> list:
    value = data.get(key)
    if not isinstance(value, list):
        raise GraphSchemaError(key, "expected an array")
    return value


def _require_str(raw: object, key: str, where: str, default: str | None = None) -> str:
    if not isinstance(raw, Mapping):
        raise GraphSchemaError(where, "expected an object")
    if key not in raw:
        if default is not None:
            return default
        raise GraphSchemaError(f"{where}.{key}", "missing")
    value = raw[key]
    if not isinstance(value, str):
        raise GraphSchemaError(f"{where}.{key}", "expected a string")
    return value


def dumps_json(payload: object) -> str:
    """Stable JSON text used for every artifact the package writes."""
    return json.dumps(payload, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def json_number(x: float) -> float | str:
    """Infinities become ``"inf"``/``"-inf"`` so written files stay strict JSON."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def load_graph(path: str | Path) -> KnowledgeGraph:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphSchemaError("$", f"invalid JSON: {exc}") from exc
    return KnowledgeGraph.from_dict(data)


def save_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    Path(path).write_text(dumps_json(graph.to_dict()), encoding="utf-8")


# -- embeddings --------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingStore:
    model_tag: str
    dim: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise GraphValidationError(f"embedding dim must be positive, got {self.dim}")
        clean = {}
        for key, vec in self.vectors.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (self.dim,):
                raise GraphValidationError(
                    f"vector {key!r} has shape {arr.shape}, expected ({self.dim},)", [key]
                )
            if not np.all(np.isfinite(arr)):
                raise GraphValidationError(f"vector {key!r} has non-finite entries", [key])
            arr.setflags(write=False)
            clean[key] = arr
        object.__setattr__(self, "vectors", dict(sorted(clean.items())))

    def __contains__(self, key: object) -> bool:
        return key in self.vectors

    def __getitem__(self, key: str) -> np.ndarray:
        return self.vectors[key]

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "dim": self.dim,
            "vectors": {k: [float(x) for x in v] for k, v in self.vectors.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> EmbeddingStore:
        if not isinstance(data, Mapping):
            raise GraphSchemaError("$", "expected an object")
        tag = data.get("model_tag")
        dim = data.get("dim")
        vectors = data.get("vectors")
        if not isinstance(tag, str):
            raise GraphSchemaError("model_tag", "expected a string")
        if isinstance(dim, bool) or not isinstance(dim, int):
            raise GraphSchemaError("dim", "expected an integer")
        if not isinstance(vectors, Mapping):
            raise GraphSchemaError("vectors", "expected an object")
        return cls(model_tag=tag, dim=dim, vectors=dict(vectors))


def load_embeddings(path: str | Path) -> EmbeddingStore:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphSchemaError("$", f"invalid JSON: {exc}") from exc
    return EmbeddingStore.from_dict(data)


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    Path(path).write_text(dumps_json(store.to_dict()), encoding="utf-8")


def cosine_sim(u, v) -> float:
    """Cosine similarity clamped to [-1, 1]; 0.0 if either vector is zero."""
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(a, b)) / (na * nb)))
