"""Provider-agnostic chat-completion gateway: one contract for every
model, with retries, per-provider rate limiting, and a persistent
response cache that doubles as an auditable transcript and enables
deterministic replay (zero network traffic).
"""
from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Protocol

from ..retry import Attempt, RetryPolicy, run_with_retries

ROLES = ("system", "user", "assistant")
FINISH_REASONS = ("stop", "length", "error")


class GatewayError(Exception):
    pass


class AuthFailed(GatewayError):
    pass


class ProviderRejected(GatewayError):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"provider rejected request ({status}): {message}")


class ReplayMiss(GatewayError):
    def __init__(self, key: str, summary: str = ""):
        self.key = key
        super().__init__(f"replay cache miss for key {key}" + (f" ({summary})" if summary else ""))


class CacheCorrupt(GatewayError):
    def __init__(self, path: str, cause: str):
        self.path = path
        super().__init__(f"corrupt cache file {path}: {cause}")


class NoFixtureMatched(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    provider_id: str
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request needs at least one message")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown message role {role!r}")
        if self.messages[-1][0] != "user":
            raise ValueError("last message must have role user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    @property
    def last_user_text(self) -> str:
        return self.messages[-1][1]

    def cache_key(self) -> str:
        payload = {
            "provider_id": self.provider_id,
            "model_id": self.model_id,
            "messages": [list(m) for m in self.messages],
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                               ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_obj(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "model_id": self.model_id,
            "messages": [list(m) for m in self.messages],
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ChatRequest":
        return cls(
            provider_id=obj["provider_id"],
            model_id=obj["model_id"],
            messages=tuple((role, text) for role, text in obj["messages"]),
            temperature=obj["temperature"],
            max_output_tokens=obj["max_output_tokens"],
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0
    from_cache: bool = False
    reasoning: Optional[str] = None  # stored in transcripts, never parsed

    def __post_init__(self):
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "stop" and not self.text:
            raise ValueError("text must be nonempty when finish_reason is stop")

    def to_obj(self) -> dict:
        obj = {
            "text": self.text,
            "finish_reason": self.finish_reason,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "latency_s": self.latency_s,
            "from_cache": self.from_cache,
        }
        if self.reasoning is not None:
            obj["reasoning"] = self.reasoning
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "ChatResponse":
        return cls(
            text=obj["text"],
            finish_reason=obj["finish_reason"],
            prompt_tokens=obj.get("prompt_tokens", 0),
            completion_tokens=obj.get("completion_tokens", 0),
            latency_s=obj.get("latency_s", 0.0),
            from_cache=obj.get("from_cache", False),
            reasoning=obj.get("reasoning"),
        )


class Provider(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse:
        """One completion attempt; raise retry.TransientFailure for
        retryable conditions, AuthFailed/ProviderRejected otherwise."""
        ...


class TokenBucket:
    """Simple request-rate limiter; acquire() blocks until a token is
    available. Thread-safe."""

    def __init__(self, rate_per_s: float, burst: int = 1, *,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate_per_s <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_s
        self.capacity = max(1, burst)
        self._tokens = float(self.capacity)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class ProviderLimits:
    bucket: Optional[TokenBucket] = None
    in_flight: Optional[threading.Semaphore] = None


@dataclass(frozen=True)
class CachedCall:
    request: ChatRequest
    response: ChatResponse
    attempts: tuple[Attempt, ...]


class ResponseCache:
    """One file per cache key under the root; content is the canonical
    serialization of (request, response, attempts) so the cache doubles
    as a run transcript. In replay mode a miss is an error, which
    guarantees no network traffic."""

    MODES = ("record", "replay")

    def __init__(self, root, mode: str = "record"):
        if mode not in self.MODES:
            raise ValueError(f"cache mode must be one of {self.MODES}")
        self.root = Path(root)
        self.mode = mode
        if mode == "record":
            self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def lookup(self, key: str) -> Optional[CachedCall]:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            obj = json.loads(path.read_text("utf-8"))
            return CachedCall(
                request=ChatRequest.from_obj(obj["request"]),
                response=ChatResponse.from_obj(obj["response"]),
                attempts=tuple(Attempt(**a) for a in obj["attempts"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CacheCorrupt(str(path), str(exc)) from exc

    def store(self, key: str, request: ChatRequest, response: ChatResponse,
              attempts: list[Attempt]):
        payload = {
            "key": key,
            "request": request.to_obj(),
            "response": response.to_obj(),
            "attempts": [vars(a) for a in attempts],
        }
        data = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        path = self._path(key)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(data, "utf-8")
        os.replace(tmp, path)


class Gateway:
    """Dispatches requests to configured providers with retry, rate
    limiting, and optional caching. Safe for concurrent callers."""

    def __init__(self, providers: dict[str, Provider], *,
                 cache: Optional[ResponseCache] = None,
                 policy: Optional[RetryPolicy] = None,
                 limits: Optional[dict[str, ProviderLimits]] = None,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None,
                 clock: Callable[[], float] = time.monotonic):
        self.providers = providers
        self.cache = cache
        self.policy = policy or RetryPolicy()
        self.limits = limits or {}
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._clock = clock

    def _provider(self, provider_id: str) -> Provider:
        try:
            return self.providers[provider_id]
        except KeyError:
            raise GatewayError(f"provider {provider_id!r} is not configured") from None

    def complete_with_attempts(self, request: ChatRequest) -> tuple[ChatResponse, list[Attempt]]:
        provider = self._provider(request.provider_id)
        limits = self.limits.get(request.provider_id)

        def attempt():
            if limits and limits.bucket:
                limits.bucket.acquire()
            if limits and limits.in_flight:
                with limits.in_flight:
                    return provider.send(request)
            return provider.send(request)

        started = self._clock()
        response, attempts = run_with_retries(
            attempt, self.policy, sleep=self._sleep, rng=self._rng, clock=self._clock)
        if response.latency_s == 0.0:
            response = replace(response, latency_s=self._clock() - started)
        return response, attempts

    def complete(self, request: ChatRequest) -> ChatResponse:
        return self.complete_with_attempts(request)[0]

    def chat_with_attempts(self, request: ChatRequest) -> tuple[ChatResponse, list[Attempt]]:
        """complete() through the cache (record: fill on miss; replay:
        miss is an error and the provider is never contacted)."""
        if self.cache is None:
            return self.complete_with_attempts(request)
        key = request.cache_key()
        cached = self.cache.lookup(key)
        if cached is not None:
            return replace(cached.response, from_cache=True), [Attempt(1, "cache_hit")]
        if self.cache.mode == "replay":
            raise ReplayMiss(key, summary=f"{request.provider_id}/{request.model_id}")
        response, attempts = self.complete_with_attempts(request)
        self.cache.store(key, request, response, attempts)
        return response, attempts

    def chat(self, request: ChatRequest) -> ChatResponse:
        return self.chat_with_attempts(request)[0]


def cached_complete(cache: ResponseCache, request: ChatRequest,
                    complete: Callable[[ChatRequest], tuple[ChatResponse, list[Attempt]]]
                    ) -> ChatResponse:
    """Functional form of the cache protocol for callers that bring their
    own completion function."""
    key = request.cache_key()
    cached = cache.lookup(key)
    if cached is not None:
        return replace(cached.response, from_cache=True)
    if cache.mode == "replay":
        raise ReplayMiss(key)
    response, attempts = complete(request)
    cache.store(key, request, response, attempts)
    return response
