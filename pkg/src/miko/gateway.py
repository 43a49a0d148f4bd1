"""Uniform client for the three model backends.

One Gateway fronts a text chat model, a multimodal chat model and a
per-token embedding service. It adds bounded retries with exponential
backoff, optional token-bucket rate limiting, a content-addressed
response cache on disk, and call counters. Deterministic mock backends
make every downstream feature testable offline: with a warm cache a
re-run performs zero backend calls.

Credentials come from the environment only:
    MIKO_LLM_BASE_URL / MIKO_LLM_API_KEY
    MIKO_MLLM_BASE_URL / MIKO_MLLM_API_KEY
    MIKO_EMBED_BASE_URL / MIKO_EMBED_API_KEY

Cache layout: <cache_dir>/<first two hex>/<key>.json holding
{request_digest, response, stored_at, checksum}; entries whose checksum
no longer matches are logged and treated as misses.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import mimetypes
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import (
    AuthError,
    BackendError,
    BackendTimeout,
    CacheCorrupt,
    EmptyText,
    RateLimited,
)
from .prompts import load_prefixes

log = logging.getLogger(__name__)


@dataclass
class ChatRequest:
    backend: str  # "llm" or "mllm"
    model_id: str
    prompt: str
    image: str | None = None
    temperature: float = 0.7
    max_tokens: int = 512
    request_tag: str = ""  # stage:post_id[:relation]; not part of the cache key

    def validate(self):
        if self.backend not in ("llm", "mllm"):
            raise ValueError(f"backend must be llm or mllm, got {self.backend!r}")
        if not self.prompt:
            raise EmptyText("chat prompt must be nonempty")
        if self.image is not None and self.backend != "mllm":
            raise ValueError("image attachments require the mllm backend")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of [0, 2]: {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass
class ChatResponse:
    text: str
    model_id: str
    latency_ms: int
    cached: bool
    raw_finish_reason: str = ""


@dataclass
class TokenEmbeddings:
    tokens: list[str]
    vectors: list[list[float]]
    dim: int

    def validate(self):
        if len(self.tokens) != len(self.vectors) or not self.tokens:
            raise ValueError("tokens and vectors must be equal-length and nonempty")
        for vec in self.vectors:
            if len(vec) != self.dim:
                raise ValueError(f"vector length {len(vec)} != dim {self.dim}")
            if not all(math.isfinite(x) for x in vec):
                raise ValueError("vectors must contain finite numbers")


def _canonical_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _image_digest(reference: str) -> str:
    path = Path(reference)
    try:
        if path.is_file():
            return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        pass
    # Unresolvable references still need a stable key component.
    return hashlib.sha256(f"ref:{reference}".encode("utf-8")).hexdigest()


class ResponseCache:
    """Write-once JSON cache, atomic via temp-file-then-rename."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.is_file():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            if entry["checksum"] != _canonical_digest(entry["response"]):
                raise CacheCorrupt(f"checksum mismatch for {key}")
            return entry["response"]
        except (OSError, ValueError, KeyError, CacheCorrupt) as exc:
            log.warning("cache entry %s unusable (%s); treating as miss", key, exc)
            return None

    def put(self, key: str, response: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "request_digest": key,
            "response": response,
            "stored_at": datetime.now(timezone.utc).isoformat(),
            "checksum": _canonical_digest(response),
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class TokenBucket:
    """Blocking rate limiter; rate is requests per second."""

    def __init__(self, rate: float, capacity: float | None = None):
        self.rate = float(rate)
        self.capacity = capacity if capacity is not None else max(1.0, self.rate)
        self._tokens = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


# --- HTTP backends ----------------------------------------------------------


def _raise_for_status(resp: requests.Response):
    if resp.status_code in (401, 403):
        raise AuthError(f"credentials rejected ({resp.status_code})")
    if resp.status_code == 429:
        hint = resp.headers.get("Retry-After")
        try:
            retry_after = float(hint) if hint else None
        except ValueError:
            retry_after = None
        raise RateLimited(retry_after=retry_after)
    if resp.status_code >= 400:
        raise BackendError(resp.status_code, resp.text[:200])


class OpenAIChatBackend:
    """Chat-completions client; also carries images for multimodal models."""

    def __init__(self, base_url: str, api_key: str = "", timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.session = requests.Session()
        self.calls = 0

    def _content(self, req: ChatRequest):
        if req.image is None:
            return req.prompt
        path = Path(req.image)
        if path.is_file():
            mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
            encoded = base64.b64encode(path.read_bytes()).decode("ascii")
            url = f"data:{mime};base64,{encoded}"
        else:
            url = req.image if "://" in req.image else f"file://{req.image}"
        return [
            {"type": "text", "text": req.prompt},
            {"type": "image_url", "image_url": {"url": url}},
        ]

    def complete(self, req: ChatRequest) -> tuple[str, str]:
        self.calls += 1
        payload = {
            "model": req.model_id,
            "messages": [{"role": "user", "content": self._content(req)}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json=payload, headers=headers, timeout=self.timeout,
            )
        except requests.Timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendError(0, str(exc)) from exc
        _raise_for_status(resp)
        try:
            choice = resp.json()["choices"][0]
            return choice["message"]["content"], choice.get("finish_reason") or ""
        except (ValueError, KeyError, IndexError) as exc:
            raise BackendError(resp.status_code, f"malformed completion payload: {exc}") from exc


class HttpEmbeddingBackend:
    """POST /token-embeddings {"text": str} -> {"tokens", "vectors", "dim"}."""

    def __init__(self, base_url: str, api_key: str = "", timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.session = requests.Session()
        self.calls = 0
        self.cache_id = f"http:{self.base_url}"

    def embed(self, text: str) -> TokenEmbeddings:
        self.calls += 1
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(
                f"{self.base_url}/token-embeddings",
                json={"text": text}, headers=headers, timeout=self.timeout,
            )
        except requests.Timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendError(0, str(exc)) from exc
        _raise_for_status(resp)
        data = resp.json()
        emb = TokenEmbeddings(data["tokens"], data["vectors"], data["dim"])
        emb.validate()
        return emb


# --- deterministic offline backends -----------------------------------------


class MockChatBackend:
    """Seeded fake chat model.

    mode="stage" inspects request_tag (stage:post_id[:relation]) and emits
    stage-appropriate, parseable text; mode="echo" returns "ECHO:<prompt>".
    Output is a pure function of (seed, request_tag, prompt), so repeated
    runs are byte-identical.
    """

    def __init__(self, seed: int = 0, mode: str = "stage"):
        if mode not in ("stage", "echo"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.seed = seed
        self.mode = mode
        self.calls = 0
        self._prefixes = load_prefixes()

    def _digest(self, req: ChatRequest) -> str:
        blob = f"{self.seed}|{req.request_tag}|{req.prompt}"
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def complete(self, req: ChatRequest) -> tuple[str, str]:
        self.calls += 1
        if self.mode == "echo":
            return f"ECHO:{req.prompt}", "stop"
        h = self._digest(req)
        stage = req.request_tag.split(":", 1)[0]
        if stage == "caption":
            text = f"The image shows scene {h[:8]} closely related to the post."
        elif stage == "keyinfo":
            text = (
                f"Concept: concept_{h[:6]}\n"
                f"Action: action_{h[6:12]}\n"
                f"Object: object_{h[12:18]}\n"
                f"Emotion: emotion_{h[18:24]}\n"
                f"Keywords: kw_{h[24:30]}, kw_{h[30:36]}, kw_{h[36:42]}"
            )
        elif stage == "intention":
            code = req.request_tag.rsplit(":", 1)[-1]
            prefix = self._prefixes.get(code, ["The model replies that"])[0]
            text = f"{prefix} engage with topic {h[:8]} going forward."
        else:
            text = f"mock response {h[:12]}"
        return text, "stop"


class RecordedFixtureBackend:
    """Replays canned responses keyed by request_tag, byte-identically."""

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "RecordedFixtureBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["responses"] if "responses" in data else data)

    def complete(self, req: ChatRequest) -> tuple[str, str]:
        self.calls += 1
        if req.request_tag not in self.responses:
            raise BackendError(404, f"no recorded response for tag {req.request_tag!r}")
        return self.responses[req.request_tag], "stop"


class HashEmbeddingBackend:
    """Whitespace tokenizer + seeded hash vectors; deterministic, nonzero."""

    def __init__(self, seed: int = 0, dim: int = 16):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.seed = seed
        self.dim = dim
        self.calls = 0
        self.cache_id = f"hash:{seed}:{dim}"

    def _vector(self, token: str) -> list[float]:
        values: list[float] = []
        block = 0
        while len(values) < self.dim:
            digest = hashlib.sha256(f"{self.seed}|{block}|{token}".encode("utf-8")).digest()
            for i in range(0, len(digest) - 1, 2):
                if len(values) == self.dim:
                    break
                # 2 bytes -> [-1, 1]; 65535 is odd so exact zero is unreachable
                values.append(int.from_bytes(digest[i:i + 2], "big") / 65535 * 2 - 1)
            block += 1
        return values

    def embed(self, text: str) -> TokenEmbeddings:
        self.calls += 1
        tokens = text.split()
        if not tokens:
            raise EmptyText("cannot embed empty text")
        emb = TokenEmbeddings(tokens, [self._vector(t) for t in tokens], self.dim)
        emb.validate()
        return emb


# --- the gateway -------------------------------------------------------------

_RETRYABLE = (RateLimited, BackendTimeout)


class Gateway:
    """Shared, thread-safe front for chat/multimodal/embedding backends."""

    def __init__(
        self,
        llm=None,
        mllm=None,
        embed=None,
        cache_dir: str | Path | None = None,
        max_attempts: int = 3,
        retry_base_delay: float = 0.5,
        rate_limits: dict[str, float] | None = None,
        max_inflight: int = 8,
    ):
        self._backends = {"llm": llm, "mllm": mllm}
        self._embed = embed
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.max_attempts = max_attempts
        self.retry_base_delay = retry_base_delay
        self._buckets = {
            kind: TokenBucket(rate)
            for kind, rate in (rate_limits or {}).items()
            if rate
        }
        self._inflight = threading.BoundedSemaphore(max_inflight)
        self._lock = threading.Lock()
        self.backend_calls = 0
        self.cache_hits = 0

    @classmethod
    def from_env(cls, **kwargs) -> "Gateway":
        """Build HTTP backends from MIKO_* environment variables."""
        def backend(prefix, cls_):
            base = os.environ.get(f"MIKO_{prefix}_BASE_URL")
            if not base:
                return None
            return cls_(base, os.environ.get(f"MIKO_{prefix}_API_KEY", ""))

        kwargs.setdefault("rate_limits", {"llm": 4.0, "mllm": 4.0, "embed": 4.0})
        return cls(
            llm=backend("LLM", OpenAIChatBackend),
            mllm=backend("MLLM", OpenAIChatBackend),
            embed=backend("EMBED", HttpEmbeddingBackend),
            **kwargs,
        )

    # --- bookkeeping ---------------------------------------------------

    def _count_call(self):
        with self._lock:
            self.backend_calls += 1

    def _count_hit(self):
        with self._lock:
            self.cache_hits += 1

    def counters(self) -> dict[str, int]:
        with self._lock:
            return {"backend_calls": self.backend_calls, "cache_hits": self.cache_hits}

    def reset_counters(self):
        with self._lock:
            self.backend_calls = 0
            self.cache_hits = 0

    # --- chat ----------------------------------------------------------

    def cache_key(self, req: ChatRequest) -> str:
        """Digest over everything that determines the response.

        request_tag is deliberately excluded; the prompt string already
        carries the rendered template (and thus its version).
        """
        req.validate()
        return _canonical_digest({
            "kind": "chat",
            "backend": req.backend,
            "model_id": req.model_id,
            "prompt": req.prompt,
            "image": _image_digest(req.image) if req.image is not None else None,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })

    def _with_retries(self, kind: str, call):
        bucket = self._buckets.get(kind)
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if bucket is not None:
                bucket.acquire()
            self._count_call()
            try:
                with self._inflight:
                    return call()
            except _RETRYABLE as exc:
                last = exc
            except BackendError as exc:
                if exc.status and exc.status < 500:
                    raise
                last = exc
            if attempt + 1 < self.max_attempts:
                delay = self.retry_base_delay * (2 ** attempt)
                if isinstance(last, RateLimited) and last.retry_after:
                    delay = max(delay, last.retry_after)
                if delay > 0:
                    time.sleep(delay)
        assert last is not None
        raise last

    def chat(self, req: ChatRequest, use_cache: bool = True) -> ChatResponse:
        req.validate()
        backend = self._backends.get(req.backend)
        if backend is None:
            raise BackendError(0, f"no {req.backend} backend configured")
        key = self.cache_key(req)
        if use_cache and self.cache is not None:
            entry = self.cache.get(key)
            if entry is not None:
                self._count_hit()
                return ChatResponse(
                    text=entry["text"],
                    model_id=entry["model_id"],
                    latency_ms=0,
                    cached=True,
                    raw_finish_reason=entry.get("finish_reason", ""),
                )
        started = time.monotonic()
        text, finish = self._with_retries(req.backend, lambda: backend.complete(req))
        latency_ms = int((time.monotonic() - started) * 1000)
        if use_cache and self.cache is not None:
            self.cache.put(key, {
                "text": text, "model_id": req.model_id, "finish_reason": finish,
            })
        return ChatResponse(text, req.model_id, latency_ms, False, finish)

    # --- embeddings ------------------------------------------------------

    def embed_tokens(self, text: str, use_cache: bool = True) -> TokenEmbeddings:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        if self._embed is None:
            raise BackendError(0, "no embedding backend configured")
        key = _canonical_digest({
            "kind": "embed",
            "backend": getattr(self._embed, "cache_id", "embed"),
            "text": text,
        })
        if use_cache and self.cache is not None:
            entry = self.cache.get(key)
            if entry is not None:
                self._count_hit()
                emb = TokenEmbeddings(entry["tokens"], entry["vectors"], entry["dim"])
                emb.validate()
                return emb
        emb = self._with_retries("embed", lambda: self._embed.embed(text))
        if use_cache and self.cache is not None:
            self.cache.put(key, {
                "tokens": emb.tokens, "vectors": emb.vectors, "dim": emb.dim,
            })
        return emb

    @property
    def embedding_backend_id(self) -> str:
        return getattr(self._embed, "cache_id", "unconfigured")
