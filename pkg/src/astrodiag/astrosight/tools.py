"""Tool plugins that turn an image file into flat key/value facts.

A tool is a :class:`ToolDescriptor`: an id, a description, the file suffixes
it accepts and a pure function ``path -> ToolObservation``. Failures never
raise out of :meth:`ToolRegistry.invoke`; they come back as an observation
whose facts hold a single ``"error"`` entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from . import fits

Scalar = Union[bool, int, float, str]

FITS_SUFFIXES = (".fits", ".fit", ".fts")


@dataclass(frozen=True)
class ToolObservation:
    tool_id: str
    facts: Mapping[str, Scalar]
    raw: str = ""

    def __post_init__(self) -> None:
        for key, value in self.facts.items():
            if not key:
                raise ValueError(f"{self.tool_id}: empty fact key")
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"{self.tool_id}: non-finite fact {key}={value}")
        object.__setattr__(self, "facts", dict(sorted(self.facts.items())))

    @property
    def failed(self) -> bool:
        return "error" in self.facts

    def to_dict(self) -> dict:
        return {"tool_id": self.tool_id, "facts": dict(self.facts), "raw": self.raw}


@dataclass(frozen=True)
class ToolDescriptor:
    tool_id: str
    description: str
    accepts: tuple[str, ...]
    run: Callable[[Path], ToolObservation] = field(repr=False)


def _error(tool_id: str, message: str) -> ToolObservation:
    return ToolObservation(tool_id, {"error": message}, raw=message)


class ToolRegistry:
    def __init__(self, tools: Iterable[ToolDescriptor] = ()) -> None:
        self._tools: dict[str, ToolDescriptor] = {}
        for t in tools:
            self.register(t)

    def register(self, descriptor: ToolDescriptor) -> None:
        if descriptor.tool_id in self._tools:
            raise ValueError(f"tool {descriptor.tool_id!r} already registered")
        self._tools[descriptor.tool_id] = descriptor

    def __contains__(self, tool_id: object) -> bool:
        return tool_id in self._tools

    @property
    def tool_ids(self) -> list[str]:
        return sorted(self._tools)

    def invoke(self, tool_id: str, path: str | Path) -> ToolObservation:
        tool = self._tools.get(tool_id)
        if tool is None:
            return _error(tool_id, f"unknown tool {tool_id!r}")
        p = Path(path)
        if tool.accepts and p.suffix.lower() not in tool.accepts:
            return _error(tool_id, f"unsupported file kind {p.suffix or '<none>'!r}")
        try:
            return tool.run(p)
        except (OSError, ValueError) as exc:
            return _error(tool_id, f"{type(exc).__name__}: {exc}")


# -- reference tools ------------------------------------------------------------------


def _fits_header(path: Path) -> ToolObservation:
    header = fits.parse_fits_header(path)
    facts = {}
    for key, value in header.items():
        if value is None:
            continue
        if isinstance(value, float) and not math.isfinite(value):
            continue
        facts[key] = value
    return ToolObservation("fits-header", facts, raw=f"{len(facts)} header cards")


_SATURATION = {8: 255, 16: 32767, 32: 2147483647}


def _pixel_stats(path: Path) -> ToolObservation:
    header, raw, phys = fits.read_primary_data(path)
    if phys.size == 0:
        return _error("pixel-stats", "primary HDU holds no pixels")
    bitpix = header["BITPIX"]
    if bitpix in _SATURATION:
        clipped = float(np.count_nonzero(raw == _SATURATION[bitpix])) / raw.size
    else:
        sat = header.get("SATURATE")
        clipped = float(np.count_nonzero(phys >= sat)) / phys.size if isinstance(sat, (int, float)) else 0.0
    facts = {
        "mean": float(phys.mean()),
        "median": float(np.median(phys)),
        "std": float(phys.std()),
        "min": float(phys.min()),
        "max": float(phys.max()),
        "clipped_fraction": clipped,
    }
    return ToolObservation(
        "pixel-stats", facts, raw=f"{phys.size} pixels, BITPIX {bitpix}"
    )


FITS_HEADER = ToolDescriptor(
    "fits-header", "Primary FITS header cards as facts", FITS_SUFFIXES, _fits_header
)
PIXEL_STATS = ToolDescriptor(
    "pixel-stats",
    "Mean/median/spread/extremes and saturated-pixel fraction of the primary image",
    FITS_SUFFIXES,
    _pixel_stats,
)


def default_registry() -> ToolRegistry:
    return ToolRegistry([FITS_HEADER, PIXEL_STATS])
