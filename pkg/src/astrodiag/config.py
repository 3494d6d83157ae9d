"""Run configuration: one JSON file with paths, hyperparameters and backend choice."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .askrag.aggregate import MessagePassingConfig
from .askrag.driver import DriverConfig
from .askrag.partition import PartitionConfig
from .kg import json_number
from .rwb import RwbConfig


class ConfigError(ValueError):
    pass


# name -> (symbol, description); drives --help
HYPERPARAMETERS: dict[str, tuple[str, str]] = {
    "mu": ("μ", "resource decay rate along edges, in (0, 1]"),
    "top_k_paths": ("K", "most reliable paths kept per anchor pair"),
    "max_hops": ("", "longest path (in edges) considered during partitioning"),
    "gamma": ("γ", "balance between keyword similarity and layer depth, > 0"),
    "beta": ("β_q", "partition/aggregate threshold; scalar or per-layer list"),
    "one_based_layers": ("", "count layers from 1 instead of 0 in the layer term"),
    "pair_scope": ("", "'all' agent pairs or pipeline-'adjacent' pairs"),
    "hidden_dim": ("", "message-passing output width"),
    "seed": ("", "seed of the message-passing projections"),
    "top_k_edges": ("K", "similarity links added per aggregation"),
    "tau": ("τ", "confidence threshold for continuing backtracking, in [0, 1]"),
    "xi": ("ξ", "conflict threshold triggering coordinator arbitration, in [0, 1]"),
    "eta": ("η", "selection threshold for cause nodes, in [0, 1]"),
    "max_depth": ("", "deepest backtracking level"),
    "max_layers": ("", "longest wordlist"),
    "max_keywords": ("", "size of the extracted keyword library"),
    "embed_dim": ("", "mock embedding width"),
}

PATH_KEYS = ("kg", "embeddings", "wordlists", "agents", "mock", "subkgs", "docs")


@dataclass
class RunConfig:
    backend: str = "mock"
    paths: dict[str, str] = field(default_factory=dict)
    mu: float = 0.8
    top_k_paths: int = 5
    max_hops: int = 4
    gamma: float = 1.0
    beta: Any = 0.0
    one_based_layers: bool = False
    pair_scope: str = "all"
    hidden_dim: int = 64
    seed: int = 0
    top_k_edges: int = 5
    tau: float = 0.5
    xi: float = 0.4
    eta: float = 0.5
    max_depth: int = 6
    max_layers: int = 6
    max_keywords: int = 200
    embed_dim: int = 64
    jobs: int = 1
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.backend not in ("mock", "live"):
            raise ConfigError(f"backend must be 'mock' or 'live', got {self.backend!r}")
        unknown = set(self.paths) - set(PATH_KEYS)
        if unknown:
            raise ConfigError(f"unknown path keys: {sorted(unknown)}")
        if isinstance(self.beta, list):
            self.beta = tuple(float(b) for b in self.beta)
        elif not isinstance(self.beta, tuple):
            self.beta = float(self.beta)
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.max_layers < 1 or self.max_keywords < 1 or self.embed_dim < 1:
            raise ConfigError("max_layers, max_keywords and embed_dim must be >= 1")
        try:
            self.driver()
            self.rwb()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Path | None = None) -> RunConfig:
        names = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data), base_dir=base_dir or Path("."))

    def path(self, key: str) -> Path | None:
        raw = self.paths.get(key)
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def partition(self) -> PartitionConfig:
        return PartitionConfig(self.mu, self.top_k_paths, self.max_hops)

    def message_passing(self) -> MessagePassingConfig:
        return MessagePassingConfig(self.hidden_dim, self.seed, 0.0, self.top_k_edges)

    def driver(self) -> DriverConfig:
        return DriverConfig(
            gamma=self.gamma,
            beta=self.beta,
            partition=self.partition(),
            aggregate=self.message_passing(),
            one_based_layers=self.one_based_layers,
            pair_scope=self.pair_scope,
        )

    def rwb(self) -> RwbConfig:
        return RwbConfig(self.tau, self.xi, self.eta, self.max_depth)

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        if isinstance(self.beta, tuple):
            out["beta"] = [json_number(b) for b in self.beta]
        else:
            out["beta"] = json_number(self.beta)
        return out


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a JSON object")
    return RunConfig.from_dict(data, base_dir=p.parent)

