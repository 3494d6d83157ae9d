"""Default twelve-agent roster.

The process list and the relevance links between processes are a project
choice; ship your own ``agents.json`` to change either.
"""

from __future__ import annotations

from .pipeline import AgentSpec, Pipeline

_HDR = ("fits-header",)
_ALL = ("fits-header", "pixel-stats")

# (agent_id, stage, process name, relevant predecessors, tools)
_ROSTER = [
    ("equipment-matching", "preparation", "equipment matching", (), _HDR),
    ("site-weather", "preparation", "site and weather", (), _HDR),
    ("framing-plan", "preparation", "framing plan", ("equipment-matching",), _HDR),
    ("mount-tracking", "shooting", "mount tracking", ("equipment-matching", "site-weather"), _HDR),
    ("focus", "shooting", "focus", ("equipment-matching", "site-weather"), _ALL),
    ("guiding", "shooting", "guiding", ("mount-tracking", "site-weather"), _HDR),
    (
        "exposure-plan",
        "shooting",
        "exposure plan",
        ("equipment-matching", "framing-plan", "site-weather"),
        _ALL,
    ),
    ("calibration-frames", "shooting", "calibration frames", ("equipment-matching", "exposure-plan"), _HDR),
    ("stacking", "post_processing", "stacking", ("calibration-frames", "exposure-plan", "guiding"), _ALL),
    (
        "background-extraction",
        "post_processing",
        "background extraction",
        ("calibration-frames", "site-weather", "stacking"),
        _ALL,
    ),
    (
        "color-calibration",
        "post_processing",
        "color calibration",
        ("background-extraction", "equipment-matching", "stacking"),
        _ALL,
    ),
    (
        "stretch-denoise",
        "post_processing",
        "stretch and denoise",
        ("background-extraction", "color-calibration", "exposure-plan", "stacking"),
        _ALL,
    ),
]


def default_pipeline() -> Pipeline:
    return Pipeline(
        tuple(
            AgentSpec(agent_id, stage, name, i, preds, tools)
            for i, (agent_id, stage, name, preds, tools) in enumerate(_ROSTER)
        )
    )
