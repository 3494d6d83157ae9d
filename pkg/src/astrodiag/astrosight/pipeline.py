"""Specialist agents arranged along the imaging process."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..backends import ChatBackend, ChatRequest, EmbedBackend, RequestTag, ask_structured
from ..kg import KnowledgeGraph, cosine_sim, dumps_json
from .tools import ToolObservation

logger = logging.getLogger(__name__)

STAGES = ("preparation", "shooting", "post_processing")

DEFAULT_QUESTION = (
    "Inspect the image facts for quality problems that originate in your process. "
    "Report whether you detect an error, summarize it, and state your confidence."
)

REPLY_CONTRACT = (
    "Answer with one fenced ```json block holding exactly these keys: "
    '"observation" (string), "error_detected" (true/false), '
    '"error_summary" (string, empty when no error), "confidence" (number in [0,1]), '
    '"rationale" (string).'
)

REPLY_SCHEMA = {
    "observation": "str",
    "error_detected": "bool",
    "error_summary": "str",
    "confidence": "number",
    "rationale": "str",
}


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    stage: str
    process_name: str
    order_index: int
    relevant_predecessors: tuple[str, ...] = ()
    tool_ids: tuple[str, ...] = ()
    prompt_template: str = ""

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise PipelineError(f"{self.agent_id}: unknown stage {self.stage!r}")
        if self.order_index < 0:
            raise PipelineError(f"{self.agent_id}: order_index must be >= 0")
        object.__setattr__(self, "relevant_predecessors", tuple(sorted(self.relevant_predecessors)))
        object.__setattr__(self, "tool_ids", tuple(self.tool_ids))
        if not self.prompt_template:
            object.__setattr__(self, "prompt_template", default_template(self.process_name))

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "stage": self.stage,
            "process_name": self.process_name,
            "order_index": self.order_index,
            "relevant_predecessors": list(self.relevant_predecessors),
            "tool_ids": list(self.tool_ids),
            "prompt_template": self.prompt_template,
        }


def default_template(process_name: str) -> str:
    return (
        f"You are the specialist for the '{process_name}' process of astronomical imaging.\n\n"
        "Reference knowledge:\n{context}\n\n"
        "Image facts:\n{image_facts}\n\n"
        "Task: {question}"
    )


@dataclass(frozen=True)
class Pipeline:
    agents: tuple[AgentSpec, ...]
    coordinator: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        agents = tuple(sorted(self.agents, key=lambda a: a.order_index))
        object.__setattr__(self, "agents", agents)
        if not agents:
            raise PipelineError("a pipeline needs at least one agent")
        ids = [a.agent_id for a in agents]
        if len(set(ids)) != len(ids):
            raise PipelineError("duplicate agent ids")
        idx = [a.order_index for a in agents]
        if len(set(idx)) != len(idx):
            raise PipelineError("duplicate order_index values")
        by_id = {a.agent_id: a for a in agents}
        for a in agents:
            for p in a.relevant_predecessors:
                if p not in by_id:
                    raise PipelineError(f"{a.agent_id}: unknown predecessor {p!r}")
                if by_id[p].order_index >= a.order_index:
                    raise PipelineError(
                        f"{a.agent_id}: predecessor {p!r} does not come earlier"
                    )
        ranks = [STAGES.index(a.stage) for a in agents]
        if ranks != sorted(ranks):
            raise PipelineError("stages out of order: preparation < shooting < post_processing")

    @property
    def agent_ids(self) -> list[str]:
        return [a.agent_id for a in self.agents]

    def agent(self, agent_id: str) -> AgentSpec:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    def predecessors(self, agent_id: str) -> list[AgentSpec]:
        """Relevant predecessors of ``agent_id`` in pipeline order."""
        wanted = set(self.agent(agent_id).relevant_predecessors)
        return [a for a in self.agents if a.agent_id in wanted]


def load_pipeline(path: str | Path) -> Pipeline:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    coordinator: dict = {}
    if isinstance(data, dict):
        coordinator = data.get("coordinator", {})
        data = data.get("agents", [])
    if not isinstance(data, list):
        raise PipelineError("agents.json must be an array of agent objects")
    agents = []
    for i, raw in enumerate(data):
        try:
            agents.append(
                AgentSpec(
                    agent_id=raw["agent_id"],
                    stage=raw["stage"],
                    process_name=raw["process_name"],
                    order_index=int(raw["order_index"]),
                    relevant_predecessors=tuple(raw.get("relevant_predecessors", [])),
                    tool_ids=tuple(raw.get("tool_ids", [])),
                    prompt_template=raw.get("prompt_template", ""),
                )
            )
        except (KeyError, TypeError) as exc:
            raise PipelineError(f"agents[{i}]: missing or invalid field {exc}") from exc
    return Pipeline(tuple(agents), coordinator)


def save_pipeline(pipeline: Pipeline, path: str | Path) -> None:
    Path(path).write_text(dumps_json([a.to_dict() for a in pipeline.agents]), encoding="utf-8")


# -- running agents ----------------------------------------------------------------


@dataclass
class AgentReply:
    agent_id: str
    observation: str = ""
    error_detected: bool = False
    error_summary: str = ""
    confidence: float = 0.0
    rationale: str = ""
    degraded: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "observation": self.observation,
            "error_detected": self.error_detected,
            "error_summary": self.error_summary,
            "confidence": self.confidence,
            "rationale": self.rationale,
            "degraded": self.degraded,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> AgentReply:
        return cls(
            agent_id=data["agent_id"],
            observation=data.get("observation", ""),
            error_detected=bool(data.get("error_detected", False)),
            error_summary=data.get("error_summary", ""),
            confidence=float(data.get("confidence", 0.0)),
            rationale=data.get("rationale", ""),
            degraded=bool(data.get("degraded", False)),
            warnings=list(data.get("warnings", [])),
        )


def clamp01(value: float, what: str, warnings: list[str]) -> float:
    if 0.0 <= value <= 1.0:
        return value
    clamped = min(1.0, max(0.0, value))
    msg = f"{what} {value} clamped to {clamped}"
    logger.warning(msg)
    warnings.append(msg)
    return clamped


def subgraph_facts(
    subkg: KnowledgeGraph,
    question: str,
    embed: EmbedBackend | None,
    top_n: int = 12,
) -> list[str]:
    """Fact lines for the ``top_n`` nodes closest to ``question``, plus edges among them."""
    if len(subkg) == 0:
        return []
    nodes = list(subkg.nodes)
    if embed is not None:
        vecs = embed.embed([question] + [n.text or n.label for n in nodes])
        q, rest = vecs[0], vecs[1:]
        scored = sorted(
            zip(nodes, rest), key=lambda nv: (-cosine_sim(q, nv[1]), nv[0].id)
        )
        nodes = [n for n, _ in scored]
    chosen = nodes[:top_n]
    keep = {n.id for n in chosen}
    lines = [f"- {n.label}: {n.text}" if n.text else f"- {n.label}" for n in chosen]
    for e in subkg.edges:
        if e.src in keep and e.dst in keep:
            a, b = subkg.node(e.src).label, subkg.node(e.dst).label
            lines.append(f"- {a} --{e.relation or 'related-to'}--> {b}")
    return lines


def format_tool_facts(observations: Sequence[ToolObservation]) -> list[str]:
    lines = []
    for obs in observations:
        for key in sorted(obs.facts):
            lines.append(f"[{obs.tool_id}] {key} = {obs.facts[key]}")
    return lines


def run_agent(
    spec: AgentSpec,
    subkg: KnowledgeGraph,
    tools_out: Sequence[ToolObservation],
    question: str,
    chat: ChatBackend,
    embed: EmbedBackend | None = None,
    *,
    upstream: Sequence[str] = (),
    tag: RequestTag | None = None,
    top_n: int = 12,
    retries: int = 3,
) -> AgentReply:
    facts = subgraph_facts(subkg, question, embed, top_n)
    if upstream:
        facts = facts + ["Errors reported by earlier processes:"] + [f"- {u}" for u in upstream]
    prompt = (
        spec.prompt_template.replace("{context}", "\n".join(facts))
        .replace("{image_facts}", "\n".join(format_tool_facts(tools_out)))
        .replace("{question}", question)
    )
    request = ChatRequest(
        system=REPLY_CONTRACT,
        messages=(("user", prompt),),
        tag=tag or RequestTag("pipeline", spec.agent_id),
    )
    reply = ask_structured(chat, request, REPLY_SCHEMA, retries=retries)
    if reply.degraded:
        msg = f"{spec.agent_id}: unparseable reply ({reply.problem})"
        logger.warning(msg)
        return AgentReply(
            spec.agent_id, rationale=reply.raw, degraded=True, warnings=[msg]
        )
    p = reply.parsed
    warnings: list[str] = []
    confidence = clamp01(p["confidence"], f"{spec.agent_id}: confidence", warnings)
    summary = p["error_summary"].strip()
    if p["error_detected"] and not summary:
        summary = p["observation"].strip() or "unspecified error"
        warnings.append(f"{spec.agent_id}: error flagged without a summary")
    if not p["error_detected"]:
        summary = ""
    return AgentReply(
        spec.agent_id,
        observation=p["observation"],
        error_detected=p["error_detected"],
        error_summary=summary,
        confidence=confidence,
        rationale=p["rationale"],
        warnings=warnings,
    )


@dataclass(frozen=True)
class DetectedError:
    agent_id: str
    summary: str


@dataclass
class PipelineRun:
    replies: list[AgentReply]
    errors: list[DetectedError]


def run_pipeline(
    pipeline: Pipeline,
    subkgs: Mapping[str, KnowledgeGraph],
    image_facts: Mapping[str, ToolObservation],
    chat: ChatBackend,
    embed: EmbedBackend | None = None,
    question: str = DEFAULT_QUESTION,
) -> PipelineRun:
    """Run every agent in order; each sees the error summaries reported before it."""
    missing = [a for a in pipeline.agent_ids if a not in subkgs]
    if missing:
        raise PipelineError(f"no sub-knowledge-graph for agents {missing}")
    replies: list[AgentReply] = []
    errors: list[DetectedError] = []
    for spec in pipeline.agents:
        observations = [image_facts[t] for t in spec.tool_ids if t in image_facts]
        reply = run_agent(
            spec,
            subkgs[spec.agent_id],
            observations,
            question,
            chat,
            embed,
            upstream=[f"{e.agent_id}: {e.summary}" for e in errors],
        )
        replies.append(reply)
        if reply.error_detected:
            errors.append(DetectedError(spec.agent_id, reply.error_summary))
    return PipelineRun(replies, errors)

