from .fits import FitsError, FitsFormatError, TruncatedHeaderError, parse_fits_header
from .pipeline import (
    AgentReply,
    AgentSpec,
    DetectedError,
    Pipeline,
    PipelineError,
    load_pipeline,
    run_agent,
    run_pipeline,
    save_pipeline,
)
from .roster import default_pipeline
from .tools import ToolDescriptor, ToolObservation, ToolRegistry, default_registry

__all__ = [
    "AgentReply",
    "AgentSpec",
    "DetectedError",
    "FitsError",
    "FitsFormatError",
    "Pipeline",
    "PipelineError",
    "ToolDescriptor",
    "ToolObservation",
    "ToolRegistry",
    "TruncatedHeaderError",
    "default_pipeline",
    "default_registry",
    "load_pipeline",
    "parse_fits_header",
    "run_agent",
    "run_pipeline",
    "save_pipeline",
]
