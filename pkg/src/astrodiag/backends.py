"""Model access: chat and embedding backends.

Two implementations share one contract. :class:`OpenAICompatBackend` talks to
any OpenAI-compatible HTTP endpoint; :class:`MockBackend` answers from a
content-keyed script so full runs are reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx
import numpy as np

logger = logging.getLogger(__name__)

PHASES = (
    "pipeline",
    "reexamine",
    "evaluate_edge",
    "resolve_conflict",
    "aggregate",
    "synthesize",
    "edge_label",
    "kg_extract",
    "judge",
)


class BackendError(RuntimeError):
    pass


class BackendConfigError(BackendError):
    """Terminal misconfiguration, e.g. rejected credentials."""


class RateLimitError(BackendError):
    def __init__(self, message: str, retry_after: float | None = None) -> None:
        super().__init__(message)
        self.retry_after = retry_after


class ScriptMissError(BackendError):
    def __init__(self, keys: Sequence[str]) -> None:
        super().__init__(f"no scripted reply for any of {list(keys)}")
        self.keys = list(keys)


@dataclass(frozen=True)
class RequestTag:
    """Identifies who is asking and why; the mock keys its script on this."""

    phase: str
    actor: str
    salient: tuple[str, ...] = ()

    def lookup_keys(self) -> list[str]:
        """Most specific key first, then progressively coarser fallbacks."""
        keys = []
        parts = [self.phase, self.actor, *self.salient]
        for n in range(len(parts), 0, -1):
            keys.append(":".join(parts[:n]))
        return keys


@dataclass(frozen=True)
class ChatRequest:
    system: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    tag: RequestTag | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("ChatRequest needs at least one message")
        for role, _ in self.messages:
            if role not in ("user", "assistant"):
                raise ValueError(f"invalid role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


class EmbedBackend(Protocol):
    model_tag: str

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


# -- structured replies --------------------------------------------------------


@dataclass
class StructuredReply:
    raw: str
    parsed: dict[str, Any] = field(default_factory=dict)
    degraded: bool = False
    problem: str = ""


_FENCE_RE = re.compile(r"```(?:json|JSON)?\s*\n?(.*?)```", re.DOTALL)

_TYPE_CHECKS = {
    "str": lambda v: isinstance(v, str),
    "bool": lambda v: isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "dict": lambda v: isinstance(v, dict),
}


def _first_json_object(raw: str) -> dict | None:
    decoder = json.JSONDecoder()
    candidates = [m.group(1) for m in _FENCE_RE.finditer(raw)] + [raw]
    for text in candidates:
        for m in re.finditer(r"\{", text):
            try:
                obj, _ = decoder.raw_decode(text, m.start())
            except json.JSONDecodeError:
                continue
            if isinstance(obj, dict):
                return obj
    return None


def parse_structured(raw: str, schema: Mapping[str, str]) -> StructuredReply:
    """Extract the first JSON object from ``raw`` and type-check it.

    ``schema`` maps expected keys to one of ``str``, ``bool``, ``number``,
    ``list`` or ``dict``. Fenced blocks are searched before bare text. Values
    are returned unclamped; range handling belongs to the caller.
    """
    obj = _first_json_object(raw or "")
    if obj is None:
        return StructuredReply(raw=raw, degraded=True, problem="no JSON object found")
    parsed: dict[str, Any] = {}
    for key, kind in schema.items():
        if key not in obj:
            return StructuredReply(raw=raw, degraded=True, problem=f"missing key {key!r}")
        value = obj[key]
        if not _TYPE_CHECKS[kind](value):
            return StructuredReply(
                raw=raw, degraded=True, problem=f"key {key!r} is not {kind}"
            )
        parsed[key] = float(value) if kind == "number" else value
    return StructuredReply(raw=raw, parsed=parsed)


REPAIR_PROMPT = (
    "Your previous reply could not be parsed ({problem}). Reply again with a "
    "single fenced ```json block containing exactly the keys: {keys}."
)


def ask_structured(
    backend: ChatBackend,
    request: ChatRequest,
    schema: Mapping[str, str],
    retries: int = 3,
) -> StructuredReply:
    """Send ``request`` and re-prompt until the reply parses, ``retries`` tries total."""
    messages = list(request.messages)
    reply = StructuredReply(raw="", degraded=True, problem="not attempted")
    for attempt in range(max(1, retries)):
        req = ChatRequest(
            system=request.system,
            messages=tuple(messages),
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            tag=request.tag,
        )
        raw = backend.chat(req)
        reply = parse_structured(raw, schema)
        if not reply.degraded:
            return reply
        logger.debug("structured reply attempt %d degraded: %s", attempt + 1, reply.problem)
        messages = messages + [
            ("assistant", raw or ""),
            ("user", REPAIR_PROMPT.format(problem=reply.problem, keys=", ".join(schema))),
        ]
    return reply


def fenced(obj: Mapping) -> str:
    """Render ``obj`` the way a compliant model is asked to reply."""
    return "```json\n" + json.dumps(obj, sort_keys=True) + "\n```"


# -- mock ---------------------------------------------------------------------


def hash_unit_vector(text: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


class MockBackend:
    """Scripted chat plus hash-derived embeddings.

    Script entries map colon-joined keys ``phase:actor[:salient...]`` to reply
    text; a request is answered by the most specific matching key (see
    :meth:`RequestTag.lookup_keys`). Unmatched requests get ``default_reply`` or,
    in strict mode, raise :class:`ScriptMissError`. Explicit ``embeddings``
    entries override hashed vectors for specific texts.
    """

    def __init__(
        self,
        script: Mapping[str, str] | None = None,
        *,
        default_reply: str = "",
        strict: bool = False,
        dim: int = 64,
        embeddings: Mapping[str, Sequence[float]] | None = None,
        model_tag: str | None = None,
    ) -> None:
        self.script = dict(script or {})
        self.default_reply = default_reply
        self.strict = strict
        self.dim = dim
        self.model_tag = model_tag or f"mock-hash-{dim}"
        self.overrides = {k: np.asarray(v, dtype=float) for k, v in (embeddings or {}).items()}
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> MockBackend:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        replies = data.get("replies", {})
        script = {k: v if isinstance(v, str) else fenced(v) for k, v in replies.items()}
        return cls(
            script,
            default_reply=data.get("default_reply", ""),
            strict=bool(data.get("strict", False)),
            dim=int(data.get("dim", 64)),
            embeddings=data.get("embeddings"),
            **kwargs,
        )

    def resolve(self, tag: RequestTag | None) -> str:
        keys = tag.lookup_keys() if tag else []
        for key in keys:
            if key in self.script:
                return self.script[key]
        if self.strict:
            raise ScriptMissError(keys)
        return self.default_reply

    def chat(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls.append(request)
        return self.resolve(request.tag)

    def calls_for(self, phase: str) -> list[ChatRequest]:
        return [c for c in self.calls if c.tag is not None and c.tag.phase == phase]

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            if text in self.overrides:
                out.append(self.overrides[text].copy())
            else:
                out.append(hash_unit_vector(text, self.dim))
        return out


# -- live ---------------------------------------------------------------------


_TRANSIENT = {408, 409, 425, 429, 500, 502, 503, 504}


class OpenAICompatBackend:
    """Chat-completions and embeddings over an OpenAI-compatible HTTP API."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        chat_model: str = "",
        embed_model: str = "",
        *,
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        max_in_flight: int = 4,
        client: httpx.Client | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.chat_model = chat_model
        self.embed_model = embed_model
        self.model_tag = embed_model or "openai-compat"
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._client = client or httpx.Client(timeout=timeout_s)
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **kwargs) -> OpenAICompatBackend:
        env = os.environ if env is None else env
        base = env.get("ASTROVLM_API_BASE")
        if not base:
            raise BackendConfigError("ASTROVLM_API_BASE is not set")
        return cls(
            base,
            api_key=env.get("ASTROVLM_API_KEY", ""),
            chat_model=env.get("ASTROVLM_CHAT_MODEL", ""),
            embed_model=env.get("ASTROVLM_EMBED_MODEL", ""),
            **kwargs,
        )

    def _post(self, route: str, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/{route}"
        last: Exception | None = None
        retry_after: float | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = retry_after if retry_after is not None else self.backoff_s * 2 ** (attempt - 1)
                time.sleep(delay)
            retry_after = None
            try:
                with self._slots:
                    resp = self._client.post(url, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code in (401, 403):
                raise BackendConfigError(f"authentication failed ({resp.status_code}) at {url}")
            if resp.status_code in _TRANSIENT:
                header = resp.headers.get("retry-after")
                try:
                    retry_after = float(header) if header is not None else None
                except ValueError:
                    retry_after = None
                last = RateLimitError(
                    f"HTTP {resp.status_code} from {url}", retry_after=retry_after
                ) if resp.status_code == 429 else BackendError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            return resp.json()
        if isinstance(last, BackendError):
            raise last
        raise BackendError(f"transport failure talking to {url}: {last}")

    def chat(self, request: ChatRequest) -> str:
        messages = [{"role": "system", "content": request.system}]
        messages += [{"role": role, "content": text} for role, text in request.messages]
        data = self._post(
            "chat/completions",
            {
                "model": self.chat_model,
                "messages": messages,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
        )
        choices = data.get("choices") or []
        if not choices:
            return ""
        message = choices[0].get("message") or {}
        return str(message.get("content") or "")

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        data = self._post("embeddings", {"model": self.embed_model, "input": list(texts)})
        rows = sorted(data.get("data", []), key=lambda r: r.get("index", 0))
        return [np.asarray(r["embedding"], dtype=float) for r in rows]

    def close(self) -> None:
        self._client.close()
