"""Completion-service client with caching, retries, rate limiting and replay.

Every request is addressed by a digest of its semantic fields
(model_id, prompt, max_output_tokens, temperature, seed). Responses live as
one JSON file per digest under ``cache_dir/<first two hex chars>/<digest>.json``,
written atomically via write-then-rename, so a cache directory can be
inspected, diffed and copied around.

Modes:

* ``live`` and ``record`` behave identically: read through the cache, call
  the endpoint on a miss, persist the response before returning. An
  identical request therefore never hits the network twice.
* ``replay`` never touches the network; a miss raises
  :class:`~planforge.errors.StrictReplayError` carrying the digest, which
  makes any run against a sealed cache bit-deterministic.

The clock and sleep functions are injectable so retry/backoff behavior is
testable without real waiting.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx

from .errors import StrictReplayError, TransportError, ValidationError

logger = logging.getLogger(__name__)


class FinishReason(str, Enum):
    COMPLETE = "complete"
    LENGTH = "length"
    ERROR = "error"


class ClientMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class CompletionRequest:
    """Semantic identity of one completion call; all fields enter the digest."""

    model_id: str
    prompt: str
    max_output_tokens: int
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValidationError("prompt must be non-empty")
        if self.max_output_tokens <= 0:
            raise ValidationError(
                f"max_output_tokens must be positive, got {self.max_output_tokens}"
            )
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: FinishReason
    latency_ms: float
    cached: bool


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff: sleeps of base, base*factor, ... between attempts."""

    max_attempts: int = 5
    backoff_base_s: float = 1.0
    backoff_factor: float = 2.0


def canonical_request(request: CompletionRequest) -> dict[str, object]:
    return {
        "model_id": request.model_id,
        "prompt": request.prompt,
        "max_output_tokens": request.max_output_tokens,
        "temperature": request.temperature,
        "seed": request.seed,
    }


def request_digest(request: CompletionRequest) -> str:
    """sha256 over the canonical JSON encoding of the request."""
    payload = json.dumps(
        canonical_request(request),
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Transport(Protocol):
    """Anything that can execute one completion call.

    Implementations raise :class:`TransportError` on failure; the client
    owns retries and caching.
    """

    def send(self, request: CompletionRequest) -> tuple[str, str]:
        """Return (text, finish_reason_string)."""
        ...


class HttpTransport:
    """Minimal JSON-over-HTTP completion transport."""

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
    ) -> None:
        self._endpoint = endpoint.rstrip("/")
        headers = {}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout_s, headers=headers)

    def send(self, request: CompletionRequest) -> tuple[str, str]:
        payload = {
            "model": request.model_id,
            "prompt": request.prompt,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "seed": request.seed,
        }
        try:
            response = self._client.post(f"{self._endpoint}/v1/completions", json=payload)
            response.raise_for_status()
            data = response.json()
        except httpx.HTTPError as exc:
            raise TransportError(f"completion call failed: {exc}") from exc
        if not isinstance(data, dict):
            raise TransportError("completion endpoint returned a non-object body")
        return str(data.get("text", "")), str(data.get("finish_reason", "complete"))

    def close(self) -> None:
        self._client.close()


class RateLimiter:
    """Token bucket; acquire() blocks via the injected sleep until a slot frees."""

    def __init__(
        self,
        rate_per_s: float,
        burst: int = 1,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate_per_s <= 0:
            raise ValidationError(f"rate_per_s must be positive, got {rate_per_s}")
        self._rate = rate_per_s
        self._capacity = max(1, burst)
        self._tokens = float(self._capacity)
        self._clock = clock
        self._sleep = sleep
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(
                    self._capacity, self._tokens + (now - self._updated) * self._rate
                )
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


class LLMClient:
    """Cached, rate-limited, retrying front door to the completion service."""

    def __init__(
        self,
        cache_dir: str | Path,
        mode: ClientMode | str = ClientMode.REPLAY,
        transport: Transport | None = None,
        retry: RetryPolicy = RetryPolicy(),
        limiter: RateLimiter | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.cache_dir = Path(cache_dir)
        self.mode = ClientMode(mode)
        self._transport = transport
        self._retry = retry
        self._limiter = limiter
        self._clock = clock
        self._sleep = sleep
        if self.mode is not ClientMode.REPLAY and transport is None:
            raise ValidationError(f"{self.mode.value} mode needs a transport")

    @classmethod
    def from_env(
        cls,
        env: Mapping[str, str] | None = None,
        **overrides: object,
    ) -> "LLMClient":
        """Build a client from PLANFORGE_* environment variables."""
        env = os.environ if env is None else env
        mode = ClientMode(env.get("PLANFORGE_MODE", ClientMode.REPLAY.value))
        cache_dir = env.get("PLANFORGE_CACHE_DIR", "llm-cache")
        transport: Transport | None = None
        if mode is not ClientMode.REPLAY:
            endpoint = env.get("PLANFORGE_ENDPOINT")
            if not endpoint:
                raise ValidationError(
                    f"PLANFORGE_ENDPOINT is required in {mode.value} mode"
                )
            transport = HttpTransport(endpoint, api_key=env.get("PLANFORGE_API_KEY"))
        kwargs: dict[str, object] = {
            "cache_dir": cache_dir,
            "mode": mode,
            "transport": transport,
        }
        kwargs.update(overrides)
        return cls(**kwargs)  # type: ignore[arg-type]

    def _cache_path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def _cache_read(self, digest: str) -> dict | None:
        path = self._cache_path(digest)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def _cache_write(
        self, digest: str, request: CompletionRequest, text: str, reason: FinishReason
    ) -> None:
        path = self._cache_path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "digest": digest,
            "request": canonical_request(request),
            "response": {"text": text, "finish_reason": reason.value},
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        tmp = path.with_suffix(f".tmp.{os.getpid()}")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, path)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = request_digest(request)
        start = self._clock()
        entry = self._cache_read(digest)
        if entry is not None:
            response = entry["response"]
            return CompletionResponse(
                text=str(response["text"]),
                finish_reason=FinishReason(response["finish_reason"]),
                latency_ms=(self._clock() - start) * 1000.0,
                cached=True,
            )
        if self.mode is ClientMode.REPLAY:
            raise StrictReplayError(f"replay cache miss for request digest {digest}")

        assert self._transport is not None  # enforced in __init__
        last_error: TransportError | None = None
        text = ""
        reason_raw = ""
        for attempt in range(self._retry.max_attempts):
            if attempt:
                delay = self._retry.backoff_base_s * self._retry.backoff_factor ** (
                    attempt - 1
                )
                self._sleep(delay)
            if self._limiter is not None:
                self._limiter.acquire()
            try:
                text, reason_raw = self._transport.send(request)
                last_error = None
                break
            except TransportError as exc:
                last_error = exc
                logger.warning(
                    "completion attempt %d/%d failed: %s",
                    attempt + 1,
                    self._retry.max_attempts,
                    exc,
                )
        if last_error is not None:
            raise TransportError(
                f"completion failed after {self._retry.max_attempts} attempts: "
                f"{last_error}"
            ) from last_error

        try:
            reason = FinishReason(reason_raw)
        except ValueError:
            reason = FinishReason.ERROR
        if reason is FinishReason.COMPLETE and not text:
            reason = FinishReason.ERROR
        self._cache_write(digest, request, text, reason)
        return CompletionResponse(
            text=text,
            finish_reason=reason,
            latency_ms=(self._clock() - start) * 1000.0,
            cached=False,
        )
