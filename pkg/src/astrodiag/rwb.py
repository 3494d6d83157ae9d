"""Backtracking root-cause analysis over a collaborative reasoning tree.

:func:`chain_of_backtracking` grows the tree from the agent that reported an
error, asking each relevant upstream agent to re-examine its process and the
coordinator to weigh the causal link. :func:`tree_reasoning` then walks every
leaf back to the root, selects nodes whose incoming link is strong while
their outgoing links are weak, lets the coordinator arbitrate when a node's
own confidence disagrees with its incoming link, and composes the final
narrative.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .astrosight.pipeline import (
    AgentReply,
    AgentSpec,
    DetectedError,
    Pipeline,
    run_agent,
)
from .astrosight.tools import ToolObservation
from .backends import ChatBackend, ChatRequest, EmbedBackend, RequestTag, ask_structured
from .kg import KnowledgeGraph, dumps_json

logger = logging.getLogger(__name__)

NO_CAUSE = "No confident root cause identified."

COORDINATOR_PROMPTS = {
    "evaluate_edge": (
        "You coordinate specialist agents diagnosing an astronomical image. Given the "
        "report of a downstream process (parent) and the re-examination by an upstream "
        "process (child), estimate the confidence in [0,1] that the child's process "
        "caused the parent's error. "
        'Reply with a fenced ```json block: {"weight": <number>}.'
    ),
    "resolve_conflict": (
        "You coordinate specialist agents diagnosing an astronomical image. The parent "
        "and child below disagree about whether the child's process caused the error. "
        "Weigh both responses and confidences and give a revised assessment of the child, "
        "its revised confidence in [0,1], and the revised causal weight in [0,1]. "
        'Reply with a fenced ```json block: {"assessment": "<text>", '
        '"confidence": <number>, "weight": <number>}.'
    ),
    "aggregate": (
        "You coordinate specialist agents diagnosing an astronomical image. Using the "
        "selected causes (strongest first) and the reasoning tree, write a concise "
        "diagnosis that explains how the causes produced the error and how to fix them. "
        'Reply with a fenced ```json block: {"narrative": "<text>"}.'
    ),
}

REEXAMINE_QUESTION = (
    "A downstream process reported an error: {error}\n"
    "The '{asker}' specialist said: {response}\n"
    "Re-examine your own process. Could it, or a closely related process, be the "
    "origin of this error? Set error_detected accordingly and give your confidence."
)


@dataclass(frozen=True)
class RwbConfig:
    tau: float = 0.5
    xi: float = 0.4
    eta: float = 0.5
    max_depth: int = 6

    def __post_init__(self) -> None:
        for name in ("tau", "xi", "eta"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass
class CrtNode:
    node_id: str
    agent_id: str
    response: AgentReply
    confidence: float
    depth: int = 0
    initial_confidence: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"node {self.node_id}: confidence {self.confidence} outside [0,1]")
        if self.initial_confidence is None:
            self.initial_confidence = self.confidence

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "agent_id": self.agent_id,
            "depth": self.depth,
            "confidence": self.confidence,
            "initial_confidence": self.initial_confidence,
            "response": self.response.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CrtNode:
        return cls(
            node_id=d["node_id"],
            agent_id=d["agent_id"],
            response=AgentReply.from_dict(d["response"]),
            confidence=float(d["confidence"]),
            depth=int(d.get("depth", 0)),
            initial_confidence=float(d.get("initial_confidence", d["confidence"])),
        )


@dataclass
class CrtEdge:
    parent: str
    child: str
    weight: float
    initial_weight: float | None = None

    def __post_init__(self) -> None:
        if self.parent == self.child:
            raise ValueError("an edge cannot join a node to itself")
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError(f"edge {self.parent}->{self.child}: weight {self.weight} outside [0,1]")
        if self.initial_weight is None:
            self.initial_weight = self.weight

    def to_dict(self) -> dict:
        return {
            "parent": self.parent,
            "child": self.child,
            "weight": self.weight,
            "initial_weight": self.initial_weight,
        }


class CollaborativeReasoningTree:
    """Rooted tree; edges point from the later-stage node to a re-examined predecessor."""

    def __init__(self, root: CrtNode) -> None:
        self.root = root.node_id
        self.nodes: dict[str, CrtNode] = {root.node_id: root}
        self.edges: dict[str, CrtEdge] = {}  # keyed by child id
        self._children: dict[str, list[str]] = {root.node_id: []}

    def add(self, parent_id: str, node: CrtNode, weight: float) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"node {node.node_id!r} already in tree")
        if parent_id not in self.nodes:
            raise ValueError(f"unknown parent {parent_id!r}")
        self.nodes[node.node_id] = node
        self.edges[node.node_id] = CrtEdge(parent_id, node.node_id, weight)
        self._children[node.node_id] = []
        self._children[parent_id].append(node.node_id)

    def parent(self, node_id: str) -> str | None:
        edge = self.edges.get(node_id)
        return edge.parent if edge else None

    def children(self, node_id: str) -> list[str]:
        return list(self._children[node_id])

    def incoming_weight(self, node_id: str) -> float:
        edge = self.edges.get(node_id)
        return edge.weight if edge else 0.0

    def max_child_weight(self, node_id: str) -> float:
        return max((self.edges[c].weight for c in self._children[node_id]), default=0.0)

    def leaves(self) -> list[str]:
        return [n for n in self.nodes if not self._children[n]]

    def chain(self, node_id: str) -> list[str]:
        """Node ids from the root down to ``node_id``."""
        out = [node_id]
        while (p := self.parent(out[-1])) is not None:
            if len(out) > len(self.nodes):
                raise ValueError("cycle in reasoning tree")
            out.append(p)
        return out[::-1]

    def depth(self) -> int:
        return max(n.depth for n in self.nodes.values())

    def validate(self) -> None:
        for nid in self.nodes:
            if self.chain(nid)[0] != self.root:
                raise ValueError(f"node {nid!r} not connected to root")
        if set(self.edges) != set(self.nodes) - {self.root}:
            raise ValueError("every non-root node needs exactly one parent")

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": [n.to_dict() for n in self.nodes.values()],
            "edges": [e.to_dict() for e in self.edges.values()],
        }

    @classmethod
    def from_dict(cls, d: Mapping, *, initial: bool = False) -> CollaborativeReasoningTree:
        """Rebuild a tree; ``initial=True`` restores pre-resolution weights and confidences."""
        nodes = {n["node_id"]: CrtNode.from_dict(n) for n in d["nodes"]}
        if initial:
            for n in nodes.values():
                n.confidence = n.initial_confidence
        tree = cls(nodes[d["root"]])
        for e in d["edges"]:
            w = float(e["initial_weight"] if initial else e["weight"])
            tree.add(e["parent"], nodes[e["child"]], w)
            tree.edges[e["child"]].initial_weight = float(e.get("initial_weight", w))
        return tree


# -- coordinator calls ----------------------------------------------------------------


def _prompts(pipeline: Pipeline | None) -> Mapping[str, str]:
    merged = dict(COORDINATOR_PROMPTS)
    if pipeline is not None:
        merged.update(pipeline.coordinator)
    return merged


def _describe(node: CrtNode) -> str:
    r = node.response
    return (
        f"agent: {node.agent_id}\nconfidence: {node.confidence}\n"
        f"error_detected: {r.error_detected}\nerror_summary: {r.error_summary}\n"
        f"observation: {r.observation}\nrationale: {r.rationale}"
    )


def evaluate_edge(
    parent: CrtNode,
    child: CrtNode,
    chat: ChatBackend,
    *,
    prompt: str = COORDINATOR_PROMPTS["evaluate_edge"],
    warnings: list[str] | None = None,
    retries: int = 3,
) -> float:
    """Coordinator's confidence that ``child``'s process caused ``parent``'s error."""
    request = ChatRequest(
        system=prompt,
        messages=(("user", f"PARENT\n{_describe(parent)}\n\nCHILD\n{_describe(child)}"),),
        tag=RequestTag("evaluate_edge", "coordinator", (child.agent_id, parent.agent_id)),
    )
    reply = ask_structured(chat, request, {"weight": "number"}, retries=retries)
    if reply.degraded:
        msg = f"edge {parent.node_id}->{child.node_id}: unparseable weight, using 0"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return 0.0
    return min(1.0, max(0.0, reply.parsed["weight"]))


@dataclass
class Resolution:
    node_id: str
    parent_id: str
    resolved: bool
    before: dict[str, float]
    after: dict[str, float]
    assessment: str = ""

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "parent_id": self.parent_id,
            "resolved": self.resolved,
            "before": dict(self.before),
            "after": dict(self.after),
            "assessment": self.assessment,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Resolution:
        return cls(
            d["node_id"], d["parent_id"], bool(d["resolved"]), dict(d["before"]),
            dict(d["after"]), d.get("assessment", ""),
        )


def resolve_conflict(
    parent: CrtNode,
    child: CrtNode,
    incoming_weight: float,
    chat: ChatBackend,
    *,
    prompt: str = COORDINATOR_PROMPTS["resolve_conflict"],
    retries: int = 3,
) -> tuple[AgentReply, float, float, bool, str]:
    """Revised (reply, confidence, weight, ok, assessment) for ``child``.

    On an unusable coordinator reply the originals come back with ``ok=False``.
    """
    request = ChatRequest(
        system=prompt,
        messages=(
            (
                "user",
                f"PARENT\n{_describe(parent)}\n\nCHILD\n{_describe(child)}\n\n"
                f"current causal weight parent->child: {incoming_weight}",
            ),
        ),
        tag=RequestTag("resolve_conflict", "coordinator", (child.agent_id, parent.agent_id)),
    )
    reply = ask_structured(
        chat, request, {"assessment": "str", "confidence": "number", "weight": "number"}, retries=retries
    )
    if reply.degraded:
        return child.response, child.confidence, incoming_weight, False, ""
    conf = min(1.0, max(0.0, reply.parsed["confidence"]))
    weight = min(1.0, max(0.0, reply.parsed["weight"]))
    assessment = reply.parsed["assessment"]
    revised = replace(child.response, confidence=conf, rationale=assessment, warnings=list(child.response.warnings))
    return revised, conf, weight, True, assessment


# -- algorithm 1 --------------------------------------------------------------------


@dataclass
class BacktrackResult:
    tree: CollaborativeReasoningTree
    cross_links: list[tuple[str, str]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def reexamine(
    spec: AgentSpec,
    error: DetectedError,
    asker: CrtNode,
    subkg: KnowledgeGraph,
    tools_out: Sequence[ToolObservation],
    chat: ChatBackend,
    embed: EmbedBackend | None = None,
) -> AgentReply:
    question = REEXAMINE_QUESTION.format(
        error=error.summary,
        asker=asker.agent_id,
        response=asker.response.observation or asker.response.error_summary,
    )
    return run_agent(
        spec,
        subkg,
        tools_out,
        question,
        chat,
        embed,
        tag=RequestTag("reexamine", spec.agent_id, (asker.agent_id,)),
    )


def chain_of_backtracking(
    error: DetectedError,
    origin_reply: AgentReply,
    pipeline: Pipeline,
    subkgs: Mapping[str, KnowledgeGraph],
    cfg: RwbConfig,
    chat: ChatBackend,
    embed: EmbedBackend | None = None,
    *,
    image_facts: Mapping[str, ToolObservation] | None = None,
    jobs: int = 1,
) -> BacktrackResult:
    """Grow the reasoning tree from the error-reporting agent.

    A re-examined agent is expanded further only when both its own confidence
    and the coordinator's link weight exceed ``tau`` and it sits above
    ``max_depth``. Each agent joins the tree once; later references to it are
    kept as cross-links.
    """
    prompts = _prompts(pipeline)
    facts = image_facts or {}
    root = CrtNode(error.agent_id, error.agent_id, origin_reply, origin_reply.confidence)
    tree = CollaborativeReasoningTree(root)
    result = BacktrackResult(tree)
    queue = deque([root])

    def examine(args: tuple[CrtNode, AgentSpec]) -> tuple[CrtNode, float, list[str]]:
        curr, spec = args
        flags: list[str] = []
        obs = [facts[t] for t in spec.tool_ids if t in facts]
        reply = reexamine(spec, error, curr, subkgs.get(spec.agent_id, KnowledgeGraph()), obs, chat, embed)
        delta = 0.0 if reply.degraded else reply.confidence
        if reply.degraded:
            flags.append(f"degraded re-examination by {spec.agent_id}")
        node = CrtNode(spec.agent_id, spec.agent_id, reply, delta, depth=curr.depth + 1)
        weight = evaluate_edge(curr, node, chat, prompt=prompts["evaluate_edge"], warnings=flags)
        return node, weight, flags

    while queue:
        curr = queue.popleft()
        fresh = []
        for spec in pipeline.predecessors(curr.agent_id):
            if spec.agent_id in tree.nodes:
                result.cross_links.append((curr.node_id, spec.agent_id))
            else:
                fresh.append((curr, spec))
        if jobs > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(examine, fresh))
        else:
            outcomes = [examine(item) for item in fresh]
        # insert in pipeline order whatever order the calls finished in
        for node, weight, flags in outcomes:
            result.flags.extend(flags)
            tree.add(curr.node_id, node, weight)
            if node.confidence > cfg.tau and weight > cfg.tau and node.depth < cfg.max_depth:
                queue.append(node)
    return result


# -- algorithm 2 --------------------------------------------------------------------

Resolver = Callable[[CrtNode, CrtNode, float], "tuple[AgentReply, float, float, bool, str]"]


@dataclass
class Selection:
    causes: list[str]
    checks: dict[str, dict[str, float]]
    resolutions: list[Resolution]


def select_causes(tree: CollaborativeReasoningTree, cfg: RwbConfig, resolver: Resolver) -> Selection:
    """Leaf-to-root sweep choosing cause nodes; mutates ``tree`` on resolution."""
    causes: list[str] = []
    checks: dict[str, dict[str, float]] = {}
    resolutions: list[Resolution] = []
    resolved: set[str] = set()
    for leaf in tree.leaves():
        curr = leaf
        while (parent := tree.parent(curr)) is not None:
            w_parent = tree.incoming_weight(curr)
            w_child = tree.max_child_weight(curr)
            if w_parent > cfg.eta and w_child < cfg.eta:
                if curr not in checks:
                    causes.append(curr)
                    checks[curr] = {"w_parent": w_parent, "w_child": w_child}
                node = tree.nodes[curr]
                if abs(node.confidence - w_parent) > cfg.xi and curr not in resolved:
                    resolved.add(curr)
                    before = {"confidence": node.confidence, "weight": w_parent}
                    reply, conf, weight, ok, text = resolver(tree.nodes[parent], node, w_parent)
                    if ok:
                        node.response = reply
                        node.confidence = conf
                        tree.edges[curr].weight = weight
                    resolutions.append(
                        Resolution(curr, parent, ok, before,
                                   {"confidence": node.confidence, "weight": tree.edges[curr].weight}, text)
                    )
            curr = parent
    return Selection(causes, checks, resolutions)


@dataclass
class Cause:
    agent_id: str
    node_id: str
    chain: list[str]
    weight: float

    def to_dict(self) -> dict:
        return {"agent_id": self.agent_id, "node_id": self.node_id, "chain": list(self.chain), "weight": self.weight}


def order_causes(causes: Sequence[str], tree: CollaborativeReasoningTree, pipeline: Pipeline) -> list[Cause]:
    """Strongest incoming weight first; ties go to the earlier pipeline process."""
    rank = {a.agent_id: a.order_index for a in pipeline.agents}
    out = [
        Cause(tree.nodes[c].agent_id, c, tree.chain(c), tree.incoming_weight(c)) for c in causes
    ]
    out.sort(key=lambda c: (-c.weight, rank.get(c.agent_id, 1 << 30), c.node_id))
    return out


def hypothesis_chain(tree: CollaborativeReasoningTree, pipeline: Pipeline) -> list[str]:
    """Greedy strongest-link descent from the root."""
    rank = {a.agent_id: a.order_index for a in pipeline.agents}
    chain = [tree.root]
    while kids := tree.children(chain[-1]):
        chain.append(
            min(kids, key=lambda c: (-tree.incoming_weight(c), rank.get(tree.nodes[c].agent_id, 1 << 30)))
        )
    return chain


def aggregate_causes(
    causes: Sequence[Cause],
    tree: CollaborativeReasoningTree,
    error: DetectedError,
    chat: ChatBackend,
    *,
    prompt: str = COORDINATOR_PROMPTS["aggregate"],
    retries: int = 3,
) -> tuple[str, bool]:
    """Coordinator narrative for ``causes``; returns (text, ok)."""
    listing = "\n".join(
        f"{i + 1}. {c.agent_id} (weight {c.weight:.3f}): {tree.nodes[c.node_id].response.observation}"
        for i, c in enumerate(causes)
    )
    request = ChatRequest(
        system=prompt,
        messages=(
            (
                "user",
                f"Error reported by {error.agent_id}: {error.summary}\n\nSelected causes:\n{listing}\n\n"
                f"Reasoning tree:\n{json.dumps(tree.to_dict(), sort_keys=True)}",
            ),
        ),
        tag=RequestTag("aggregate", "coordinator", (error.agent_id,)),
    )
    reply = ask_structured(chat, request, {"narrative": "str"}, retries=retries)
    if reply.degraded:
        return "", False
    return reply.parsed["narrative"], True


@dataclass
class ErrorDiagnosis:
    summary: str
    origin_agent: str
    tree: dict
    causes: list[Cause]
    narrative: str
    flags: list[str] = field(default_factory=list)
    hypothesis: list[str] = field(default_factory=list)
    cross_links: list[tuple[str, str]] = field(default_factory=list)
    resolutions: list[Resolution] = field(default_factory=list)
    selection_checks: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "origin_agent": self.origin_agent,
            "tree": self.tree,
            "causes": [c.to_dict() for c in self.causes],
            "narrative": self.narrative,
            "flags": list(self.flags),
            "hypothesis": list(self.hypothesis),
            "cross_links": [list(x) for x in self.cross_links],
            "resolutions": [r.to_dict() for r in self.resolutions],
            "selection_checks": {k: dict(v) for k, v in self.selection_checks.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ErrorDiagnosis:
        return cls(
            summary=d["summary"],
            origin_agent=d["origin_agent"],
            tree=d["tree"],
            causes=[Cause(c["agent_id"], c["node_id"], list(c["chain"]), float(c["weight"])) for c in d["causes"]],
            narrative=d["narrative"],
            flags=list(d.get("flags", [])),
            hypothesis=list(d.get("hypothesis", [])),
            cross_links=[tuple(x) for x in d.get("cross_links", [])],
            resolutions=[Resolution.from_dict(r) for r in d.get("resolutions", [])],
            selection_checks={k: dict(v) for k, v in d.get("selection_checks", {}).items()},
        )


def tree_reasoning(
    tree: CollaborativeReasoningTree,
    error: DetectedError,
    pipeline: Pipeline,
    cfg: RwbConfig,
    chat: ChatBackend,
) -> ErrorDiagnosis:
    prompts = _prompts(pipeline)
    flags: list[str] = []

    def coordinator(parent: CrtNode, child: CrtNode, w: float):
        return resolve_conflict(parent, child, w, chat, prompt=prompts["resolve_conflict"])

    sel = select_causes(tree, cfg, coordinator)
    for r in sel.resolutions:
        if not r.resolved:
            flags.append(f"unresolved conflict: {r.node_id}")
    causes = order_causes(sel.causes, tree, pipeline)
    hypothesis: list[str] = []
    if causes:
        narrative, ok = aggregate_causes(causes, tree, error, chat, prompt=prompts["aggregate"])
        if not ok:
            flags.append("narrative unavailable: coordinator reply unusable")
    else:
        narrative = NO_CAUSE
        flags.append("no confident root cause")
        hypothesis = hypothesis_chain(tree, pipeline)
    return ErrorDiagnosis(
        summary=error.summary,
        origin_agent=error.agent_id,
        tree=tree.to_dict(),
        causes=causes,
        narrative=narrative,
        flags=flags,
        hypothesis=hypothesis,
        resolutions=sel.resolutions,
        selection_checks=sel.checks,
    )


def verify_selection(entry: ErrorDiagnosis | Mapping, cfg: RwbConfig) -> bool:
    """Re-run cause selection offline from a serialized diagnosis.

    The tree is rebuilt with its pre-resolution values and conflicts are
    replayed from the recorded resolutions, so no coordinator is needed.
    """
    if isinstance(entry, Mapping):
        entry = ErrorDiagnosis.from_dict(entry)
    tree = CollaborativeReasoningTree.from_dict(entry.tree, initial=True)
    log = {r.node_id: r for r in entry.resolutions}

    def replayed(parent: CrtNode, child: CrtNode, w: float):
        r = log.get(child.node_id)
        if r is None or not r.resolved:
            return child.response, child.confidence, w, False, ""
        return child.response, r.after["confidence"], r.after["weight"], True, r.assessment

    sel = select_causes(tree, cfg, replayed)
    for node_id, check in sel.checks.items():
        if not (check["w_parent"] > cfg.eta and check["w_child"] < cfg.eta):
            return False
    final = CollaborativeReasoningTree.from_dict(entry.tree)
    recorded = {c.node_id for c in entry.causes}
    return (
        set(sel.causes) == recorded
        and sel.checks == entry.selection_checks
        and all(abs(final.incoming_weight(n) - tree.incoming_weight(n)) <= 1e-12 for n in tree.nodes)
    )


# -- report ----------------------------------------------------------------------------


@dataclass
class DiagnosisReport:
    image: str
    errors: list[ErrorDiagnosis]
    config_echo: dict

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "errors": [e.to_dict() for e in self.errors],
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> DiagnosisReport:
        return cls(d["image"], [ErrorDiagnosis.from_dict(e) for e in d["errors"]], dict(d["config_echo"]))


def save_report(report: DiagnosisReport, path: str | Path) -> None:
    Path(path).write_text(dumps_json(report.to_dict()), encoding="utf-8")


def load_report(path: str | Path) -> DiagnosisReport:
    return DiagnosisReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
