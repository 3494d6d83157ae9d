"""End-to-end diagnosis of one image: tools, pipeline, backtracking, cause selection."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .astrosight.pipeline import Pipeline, run_pipeline
from .astrosight.tools import ToolObservation, ToolRegistry, default_registry
from .backends import ChatBackend, EmbedBackend
from .kg import KnowledgeGraph
from .rwb import DiagnosisReport, RwbConfig, chain_of_backtracking, tree_reasoning


def ingest(image: str | Path, pipeline: Pipeline, registry: ToolRegistry) -> dict[str, ToolObservation]:
    """Run every tool any agent is bound to, once per image."""
    wanted = sorted({t for a in pipeline.agents for t in a.tool_ids})
    return {t: registry.invoke(t, image) for t in wanted}


def diagnose(
    image: str,
    pipeline: Pipeline,
    subkgs: Mapping[str, KnowledgeGraph],
    cfg: RwbConfig,
    chat: ChatBackend,
    embed: EmbedBackend | None = None,
    *,
    registry: ToolRegistry | None = None,
    config_echo: dict | None = None,
    jobs: int = 1,
) -> DiagnosisReport:
    facts = ingest(image, pipeline, registry or default_registry())
    run = run_pipeline(pipeline, subkgs, facts, chat, embed)
    replies = {r.agent_id: r for r in run.replies}
    diagnoses = []
    for error in run.errors:
        cob = chain_of_backtracking(
            error, replies[error.agent_id], pipeline, subkgs, cfg, chat, embed,
            image_facts=facts, jobs=jobs,
        )
        diag = tree_reasoning(cob.tree, error, pipeline, cfg, chat)
        diag.flags = cob.flags + diag.flags
        diag.cross_links = list(cob.cross_links)
        diagnoses.append(diag)
    return DiagnosisReport(image=str(image), errors=diagnoses, config_echo=dict(config_echo or {}))
