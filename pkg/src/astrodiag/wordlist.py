"""Keyword library extraction and per-agent relevant wordlists."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .astrosight.pipeline import AgentSpec, Pipeline
from .backends import ChatBackend, ChatRequest, RequestTag, ask_structured
from .kg import dumps_json

logger = logging.getLogger(__name__)

DEFAULT_MAX_LAYERS = 6

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")

STOPWORDS = frozenset(
    """a about above after again against all am an and any are as at be because been
    before being below between both but by can could did do does doing down during each
    few for from further had has have having he her here hers herself him himself his how
    i if in into is it its itself just me more most my myself no nor not now of off on
    once only or other our ours ourselves out over own same she should so some such than
    that the their theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why will with
    would you your yours yourself yourselves""".split()
)


class SynthesisError(RuntimeError):
    def __init__(self, agent_id: str, message: str, raw: str = "") -> None:
        super().__init__(f"{agent_id}: {message}")
        self.agent_id = agent_id
        self.raw = raw


@dataclass(frozen=True)
class WordlistEntry:
    keyword: str
    score: float

    def __post_init__(self) -> None:
        if not self.keyword:
            raise ValueError("keyword must be non-empty")
        if not (0.0 < self.score <= 1.0):
            raise ValueError(f"score for {self.keyword!r} must be in (0, 1], got {self.score}")


@dataclass(frozen=True)
class RelevantWordlist:
    agent_id: str
    layers: tuple[WordlistEntry, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError(f"wordlist for {self.agent_id!r} has no layers")

    def layer(self, q: int) -> WordlistEntry | None:
        return self.layers[q] if 0 <= q < len(self.layers) else None

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "layers": [{"keyword": e.keyword, "score": e.score} for e in self.layers],
        }


@dataclass(frozen=True)
class KeywordLibrary:
    entries: Mapping[str, float]

    def __post_init__(self) -> None:
        for kw, score in self.entries.items():
            if not kw:
                raise ValueError("empty keyword in library")
            if not (0.0 < score <= 1.0):
                raise ValueError(f"library score for {kw!r} outside (0, 1]")
        ranked = sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))
        object.__setattr__(self, "entries", dict(ranked))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, keyword: object) -> bool:
        return keyword in self.entries

    def score(self, keyword: str) -> float:
        return self.entries[keyword]


def _ngrams(text: str) -> Counter:
    tokens = _TOKEN_RE.findall(text.lower())
    grams: Counter = Counter()
    for i, tok in enumerate(tokens):
        if tok not in STOPWORDS:
            grams[tok] += 1
        if i + 1 < len(tokens):
            nxt = tokens[i + 1]
            if tok not in STOPWORDS and nxt not in STOPWORDS:
                grams[f"{tok} {nxt}"] += 1
    return grams


def extract_keywords(documents: Sequence[str], max_count: int = 200) -> KeywordLibrary:
    """Rank unigrams and bigrams by length-weighted TF-IDF.

    A term scores ``sum_d tf(t, d) * idf(t) * words(t)`` with smoothed
    ``idf = ln((1 + N) / (1 + df)) + 1``; scores are divided by the maximum.
    Weighting by word count lets a repeated phrase outrank its own parts.
    """
    if max_count < 1:
        raise ValueError("max_count must be positive")
    counts = [_ngrams(d) for d in documents if d and d.strip()]
    if not counts:
        return KeywordLibrary({})
    n_docs = len(counts)
    df: Counter = Counter()
    for c in counts:
        df.update(c.keys())
    raw: dict[str, float] = {}
    for c in counts:
        for term, tf in c.items():
            idf = math.log((1 + n_docs) / (1 + df[term])) + 1.0
            raw[term] = raw.get(term, 0.0) + tf * idf * len(term.split(" "))
    ranked = sorted(raw.items(), key=lambda kv: (-kv[1], kv[0]))[:max_count]
    if not ranked:
        return KeywordLibrary({})
    top = ranked[0][1]
    return KeywordLibrary({k: v / top for k, v in ranked})


SYNTH_SYSTEM = (
    "You build keyword wordlists for specialist agents that diagnose astronomical images. "
    "Choose keywords ONLY from the supplied library. Order them from the most general "
    "keyword to the most specific one. "
    'Reply with a fenced ```json block: {"keywords": ["<most general>", ..., "<most specific>"]}.'
)


def _synthesize_one(
    spec: AgentSpec,
    library: KeywordLibrary,
    chat: ChatBackend,
    max_layers: int,
    retries: int,
) -> RelevantWordlist:
    if len(library) == 1:
        (kw,) = library.entries
        return RelevantWordlist(spec.agent_id, (WordlistEntry(kw, library.score(kw)),))
    request = ChatRequest(
        system=SYNTH_SYSTEM,
        messages=(
            (
                "user",
                f"Agent process: {spec.process_name} (stage: {spec.stage}).\n"
                f"Pick at most {max_layers} keywords.\n"
                "Library:\n" + "\n".join(f"- {k}" for k in library.entries),
            ),
        ),
        tag=RequestTag("synthesize", spec.agent_id),
    )
    reply = ask_structured(chat, request, {"keywords": "list"}, retries=retries)
    if reply.degraded:
        raise SynthesisError(spec.agent_id, f"malformed synthesizer reply ({reply.problem})", reply.raw)
    layers: list[WordlistEntry] = []
    seen = set()
    for item in reply.parsed["keywords"]:
        kw = str(item).strip().lower()
        if kw not in library:
            logger.warning("%s: keyword %r not in library, dropped", spec.agent_id, item)
            continue
        if kw in seen:
            continue
        seen.add(kw)
        layers.append(WordlistEntry(kw, library.score(kw)))
        if len(layers) == max_layers:
            break
    if not layers:
        raise SynthesisError(spec.agent_id, "no usable keywords in synthesizer reply", reply.raw)
    return RelevantWordlist(spec.agent_id, tuple(layers))


def synthesize_wordlists(
    library: KeywordLibrary,
    pipeline: Pipeline,
    chat: ChatBackend,
    *,
    max_layers: int = DEFAULT_MAX_LAYERS,
    retries: int = 3,
    jobs: int = 1,
) -> list[RelevantWordlist]:
    """One wordlist per agent, in pipeline order."""
    if len(library) == 0:
        raise ValueError("keyword library is empty")
    if max_layers < 1:
        raise ValueError("max_layers must be >= 1")

    def work(spec: AgentSpec) -> RelevantWordlist:
        return _synthesize_one(spec, library, chat, max_layers, retries)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, pipeline.agents))
    return [work(spec) for spec in pipeline.agents]


def wordlists_to_dict(wordlists: Iterable[RelevantWordlist]) -> dict:
    return {"agents": [w.to_dict() for w in sorted(wordlists, key=lambda w: w.agent_id)]}


def wordlists_from_dict(data: Mapping) -> list[RelevantWordlist]:
    out = []
    for i, raw in enumerate(data.get("agents", [])):
        try:
            layers = tuple(WordlistEntry(e["keyword"], float(e["score"])) for e in raw["layers"])
            out.append(RelevantWordlist(raw["agent_id"], layers))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"agents[{i}]: malformed wordlist entry ({exc})") from exc
    return out


def save_wordlists(wordlists: Iterable[RelevantWordlist], path: str | Path) -> None:
    Path(path).write_text(dumps_json(wordlists_to_dict(wordlists)), encoding="utf-8")


def load_wordlists(path: str | Path) -> list[RelevantWordlist]:
    return wordlists_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
