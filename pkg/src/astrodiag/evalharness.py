"""Judge-based scoring of diagnosis reports.

Each report is scored on rationality, accuracy and diversity by a judge
backend using the rubric prompts below (written for this project; see
docs/rubrics.md). Scores are aggregated into a category x dimension grid.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backends import ChatBackend, ChatRequest, RequestTag, ask_structured
from .rwb import DiagnosisReport

logger = logging.getLogger(__name__)

CATEGORIES = ("galaxies", "nebulas", "star clusters")
DIMENSIONS = ("rationality", "accuracy", "diversity")
RUBRIC_VERSION = "1"

RUBRICS = {
    "rationality": (
        "Score from 0 to 1 how logically coherent the diagnosis is: causes must plausibly "
        "produce the reported errors and the reasoning chain must not contradict itself."
    ),
    "accuracy": (
        "Score from 0 to 1 how well the diagnosed causes match the expert ground-truth "
        "causes (same processes, same mechanisms). Penalize causes absent from the truth."
    ),
    "diversity": (
        "Score from 0 to 1 how completely the diagnosis covers the distinct ground-truth "
        "causes across different imaging processes."
    ),
}

JUDGE_SUFFIX = ' Reply with a fenced ```json block: {"score": <number>}.'


@dataclass(frozen=True)
class TrueCause:
    process: str
    description: str


@dataclass(frozen=True)
class GroundTruth:
    image: str
    category: str
    true_causes: tuple[TrueCause, ...]

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"{self.image}: category must be one of {CATEGORIES}")
        if not self.true_causes:
            raise ValueError(f"{self.image}: needs at least one true cause")


def load_truth(path: str | Path) -> list[GroundTruth]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        GroundTruth(
            d["image"],
            d["category"],
            tuple(TrueCause(c["process"], c["description"]) for c in d["true_causes"]),
        )
        for d in data
    ]


@dataclass(frozen=True)
class ScoreTriple:
    rationality: float | None
    accuracy: float | None
    diversity: float | None

    def __post_init__(self) -> None:
        for dim in DIMENSIONS:
            v = getattr(self, dim)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{dim} score {v} outside [0, 1]")

    @property
    def partial(self) -> bool:
        return any(getattr(self, d) is None for d in DIMENSIONS)

    @property
    def average(self) -> float | None:
        vals = [getattr(self, d) for d in DIMENSIONS]
        present = [v for v in vals if v is not None]
        return sum(present) / len(present) if present else None

    def to_dict(self) -> dict:
        return {d: getattr(self, d) for d in DIMENSIONS} | {
            "average": self.average,
            "partial": self.partial,
        }


def _render_report(report: DiagnosisReport) -> str:
    lines = []
    for err in report.errors:
        lines.append(f"Error ({err.origin_agent}): {err.summary}")
        for c in err.causes:
            lines.append(f"  cause: {c.agent_id} (weight {c.weight:.3f})")
        if err.narrative:
            lines.append(f"  narrative: {err.narrative}")
    return "\n".join(lines) or "No errors detected."


def judge(report: DiagnosisReport, truth: GroundTruth, chat: ChatBackend, retries: int = 3) -> ScoreTriple:
    if Path(report.image).name != Path(truth.image).name:
        raise ValueError(f"report for {report.image!r} judged against truth for {truth.image!r}")
    truth_text = "\n".join(f"- {c.process}: {c.description}" for c in truth.true_causes)
    scores: dict[str, float | None] = {}
    for dim in DIMENSIONS:
        request = ChatRequest(
            system=RUBRICS[dim] + JUDGE_SUFFIX,
            messages=(("user", f"GROUND TRUTH\n{truth_text}\n\nDIAGNOSIS\n{_render_report(report)}"),),
            tag=RequestTag("judge", dim, (Path(truth.image).name,)),
        )
        reply = ask_structured(chat, request, {"score": "number"}, retries=retries)
        if reply.degraded:
            logger.warning("judge %s for %s unusable: %s", dim, truth.image, reply.problem)
            scores[dim] = None
        else:
            scores[dim] = min(1.0, max(0.0, reply.parsed["score"]))
    return ScoreTriple(**scores)


def _mean(values: Iterable[float]) -> float | None:
    vals = list(values)
    return sum(vals) / len(vals) if vals else None


@dataclass
class ScoreGrid:
    cells: dict[str, dict[str, float | None]]
    counts: dict[str, int]
    excluded: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def average(self) -> float | None:
        return _mean(v for row in self.cells.values() for v in row.values() if v is not None)

    def to_dict(self) -> dict:
        return {
            "categories": {
                cat: {**row, "n": self.counts[cat]} for cat, row in self.cells.items()
            },
            "average": self.average,
            "footnote": {"partial_excluded": self.excluded},
        }


def aggregate(scores: Sequence[tuple[str, ScoreTriple]]) -> ScoreGrid:
    """Per-category means of each dimension; partial scores drop out of the missing cell."""
    if not scores:
        raise ValueError("nothing to aggregate")
    cells: dict[str, dict[str, float | None]] = {}
    counts: dict[str, int] = {}
    excluded: dict[str, dict[str, int]] = {}
    for cat in sorted({c for c, _ in scores}, key=lambda c: (CATEGORIES.index(c) if c in CATEGORIES else 99, c)):
        triples = [t for c, t in scores if c == cat]
        counts[cat] = len(triples)
        cells[cat] = {}
        for dim in DIMENSIONS:
            present = sorted(getattr(t, dim) for t in triples if getattr(t, dim) is not None)
            missing = len(triples) - len(present)
            if missing:
                excluded.setdefault(cat, {})[dim] = missing
            cells[cat][dim] = _mean(present)
    return ScoreGrid(cells, counts, excluded)


def rubric_echo() -> Mapping[str, str]:
    return {"version": RUBRIC_VERSION, **RUBRICS}
