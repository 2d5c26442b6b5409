"""Provider-agnostic chat and embedding access.

One gateway fronts every model role in the pipeline (extractor, generator,
judge, merger, embedder). It adds bounded retries with exponential backoff,
a bounded in-flight request count, and a record/replay cassette so any run
can be replayed offline, byte for byte.

Credentials come from environment variables only; they are never read from
config files and never logged.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

logger = logging.getLogger(__name__)

CASSETTE_MODES = ("record", "replay", "passthrough")

Vector = tuple[float, ...]


class GatewayError(Exception):
    """Base class for gateway failures."""


class TransientProviderError(GatewayError):
    """Retryable provider failure (rate limit, 5xx, connection reset)."""


class AuthenticationError(GatewayError):
    """Missing or rejected credentials; never retried."""


class RetriesExhaustedError(GatewayError):
    """All retry attempts failed."""


class CassetteMissError(GatewayError):
    """Replay mode saw a request with no recorded response."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float
    max_tokens: int

    def request_hash(self) -> str:
        return _hash_payload(
            {
                "kind": "chat",
                "model": self.model,
                "messages": [list(m) for m in self.messages],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }
        )

    def summary(self) -> str:
        head = self.messages[-1][1] if self.messages else ""
        return f"chat/{self.model}: {head[:80]!r}"


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class EmbedRequest:
    model: str
    texts: tuple[str, ...]

    def request_hash(self) -> str:
        return _hash_payload({"kind": "embed", "model": self.model, "texts": list(self.texts)})

    def summary(self) -> str:
        return f"embed/{self.model}: {len(self.texts)} texts, first {self.texts[0][:50]!r}"


def _hash_payload(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Transport(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...

    def embed(self, request: EmbedRequest) -> list[Vector]: ...


@dataclass(frozen=True)
class CassetteEntry:
    request_hash: str
    request_summary: str
    response_text: str
    usage: Mapping[str, int]


class Cassette:
    """Persisted request-hash -> response log (newline-delimited JSON).

    Replay reads are lock-free dictionary lookups; writes are serialized.
    """

    def __init__(self, path: str | Path, mode: str):
        if mode not in ("record", "replay"):
            raise ValueError(f"cassette mode must be record or replay, got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._entries: dict[str, CassetteEntry] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()
        elif mode == "replay":
            raise FileNotFoundError(f"cassette not found for replay: {self.path}")

    def _load(self) -> None:
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            entry = CassetteEntry(
                request_hash=raw["request_hash"],
                request_summary=raw.get("request_summary", ""),
                response_text=raw["response_text"],
                usage=raw.get("usage", {}),
            )
            self._entries[entry.request_hash] = entry

    def get(self, request_hash: str) -> CassetteEntry | None:
        return self._entries.get(request_hash)

    def put(self, request_hash: str, summary: str, response_text: str, usage: Mapping[str, int]) -> None:
        entry = CassetteEntry(request_hash, summary, response_text, dict(usage))
        record = {
            "request_hash": entry.request_hash,
            "request_summary": entry.request_summary,
            "response_text": entry.response_text,
            "usage": dict(entry.usage),
        }
        with self._lock:
            self._entries[request_hash] = entry
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=True, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class GatewayConfig:
    models: dict[str, str] = field(default_factory=lambda: {"default": "gpt-4o-mini"})
    embed_model: str = "text-embedding-3-small"
    temperature: float = 1.0
    max_tokens: int = 512
    max_attempts: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    embed_batch_size: int = 100

    def model_for(self, role: str) -> str:
        return self.models.get(role, self.models["default"])


@dataclass
class GatewayStats:
    """Instrumentation counters; ``max_in_flight_seen`` observes the bound."""

    provider_calls: int = 0
    retries: int = 0
    cassette_hits: int = 0
    in_flight: int = 0
    max_in_flight_seen: int = 0


class LlmGateway:
    """Chat/embedding front door with retries, cassettes, and a request cap."""

    def __init__(
        self,
        config: GatewayConfig,
        transport: Transport | None = None,
        cassette: Cassette | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.transport = transport
        self.cassette = cassette
        self.stats = GatewayStats()
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._stats_lock = threading.Lock()
        if cassette is None and transport is None:
            raise ValueError("gateway needs a transport unless replaying a cassette")
        if cassette is not None and cassette.mode == "record" and transport is None:
            raise ValueError("record mode needs a transport to record from")

    @property
    def mode(self) -> str:
        return self.cassette.mode if self.cassette is not None else "passthrough"

    def chat(
        self,
        messages: Sequence[tuple[str, str]],
        role: str = "default",
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> ChatResponse:
        request = ChatRequest(
            model=self.config.model_for(role),
            messages=tuple((r, c) for r, c in messages),
            temperature=self.config.temperature if temperature is None else temperature,
            max_tokens=self.config.max_tokens if max_tokens is None else max_tokens,
        )
        return self.chat_request(request)

    def chat_request(self, request: ChatRequest) -> ChatResponse:
        request_hash = request.request_hash()
        entry = self._recorded(request_hash)
        if entry is not None:
            return ChatResponse(text=entry.response_text, usage=dict(entry.usage))
        response = self._call_with_retry(lambda: self._require_transport().chat(request))
        if self.cassette is not None:
            self.cassette.put(request_hash, request.summary(), response.text, response.usage)
        return response

    def embed(self, texts: Sequence[str], model: str | None = None) -> list[Vector]:
        """Embed texts, one vector per text, order preserved.

        Batches are split under ``embed_batch_size`` before hitting the
        provider; each batch is one recordable request.
        """
        if not texts:
            raise ValueError("embed requires at least one text")
        model_id = model or self.config.embed_model
        vectors: list[Vector] = []
        size = self.config.embed_batch_size
        for start in range(0, len(texts), size):
            batch = tuple(texts[start : start + size])
            vectors.extend(self._embed_batch(EmbedRequest(model=model_id, texts=batch)))
        return vectors

    def _embed_batch(self, request: EmbedRequest) -> list[Vector]:
        request_hash = request.request_hash()
        entry = self._recorded(request_hash)
        if entry is not None:
            return [tuple(vec) for vec in json.loads(entry.response_text)]
        vectors = self._call_with_retry(lambda: self._require_transport().embed(request))
        vectors = [tuple(float(x) for x in vec) for vec in vectors]
        if len(vectors) != len(request.texts):
            raise GatewayError(
                f"embedding provider returned {len(vectors)} vectors for {len(request.texts)} texts"
            )
        if self.cassette is not None:
            payload = json.dumps([list(vec) for vec in vectors])
            self.cassette.put(request_hash, request.summary(), payload, {})
        return vectors

    def _recorded(self, request_hash: str) -> CassetteEntry | None:
        if self.cassette is None:
            return None
        entry = self.cassette.get(request_hash)
        if entry is not None:
            with self._stats_lock:
                self.stats.cassette_hits += 1
            return entry
        if self.cassette.mode == "replay":
            raise CassetteMissError(f"cassette miss for request hash {request_hash}")
        return None

    def _require_transport(self) -> Transport:
        if self.transport is None:
            raise GatewayError("no transport configured")
        return self.transport

    def _call_with_retry(self, call: Callable[[], object]):
        last: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                with self._stats_lock:
                    self.stats.retries += 1
                self._sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                return self._bounded(call)
            except TransientProviderError as exc:
                last = exc
                logger.warning("transient provider failure (attempt %d): %s", attempt + 1, exc)
        raise RetriesExhaustedError(f"gave up after {self.config.max_attempts} attempts: {last}")

    def _bounded(self, call: Callable[[], object]):
        with self._semaphore:
            with self._stats_lock:
                self.stats.provider_calls += 1
                self.stats.in_flight += 1
                self.stats.max_in_flight_seen = max(self.stats.max_in_flight_seen, self.stats.in_flight)
            try:
                return call()
            finally:
                with self._stats_lock:
                    self.stats.in_flight -= 1


class OpenAICompatTransport:
    """Chat/embeddings over any OpenAI-compatible HTTP endpoint.

    The API key is read from ``api_key_env`` at call time, so replay-only
    processes never need credentials.
    """

    def __init__(
        self,
        base_url: str = "https://api.openai.com/v1",
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session or requests.Session()

    def chat(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model,
            "messages": [{"role": role, "content": content} for role, content in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._post("/chat/completions", payload)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response: {exc}") from exc
        return ChatResponse(text=text or "", usage=data.get("usage", {}) or {})

    def embed(self, request: EmbedRequest) -> list[Vector]:
        data = self._post("/embeddings", {"model": request.model, "input": list(request.texts)})
        try:
            items = sorted(data["data"], key=lambda item: item["index"])
            return [tuple(float(x) for x in item["embedding"]) for item in items]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embeddings response: {exc}") from exc

    def _post(self, route: str, payload: dict) -> dict:
        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise AuthenticationError(f"set {self.api_key_env} to call the provider")
        try:
            resp = self.session.post(
                self.base_url + route,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientProviderError(str(exc)) from exc
        if resp.status_code in (429,) or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()
