"""Provider-agnostic chat-completion gateway with retries, rate limiting,
a persistent replayable response cache, and scripted test providers."""
from ..retry import Attempt, RetriesExhausted, RetryPolicy, TransientFailure
from .core import (
    AuthFailed,
    CacheCorrupt,
    CachedCall,
    ChatRequest,
    ChatResponse,
    Gateway,
    GatewayError,
    NoFixtureMatched,
    Provider,
    ProviderLimits,
    ProviderRejected,
    ReplayMiss,
    ResponseCache,
    TokenBucket,
    cached_complete,
)
from .providers import DIALECTS, HttpProvider
from .scripted import (
    FailingProvider,
    FixtureRule,
    OracleProvider,
    ScriptedProvider,
    scripted_complete,
)

__all__ = [
    "Attempt", "RetriesExhausted", "RetryPolicy", "TransientFailure",
    "AuthFailed", "CacheCorrupt", "CachedCall", "ChatRequest", "ChatResponse",
    "Gateway", "GatewayError", "NoFixtureMatched", "Provider", "ProviderLimits",
    "ProviderRejected", "ReplayMiss", "ResponseCache", "TokenBucket",
    "cached_complete", "DIALECTS", "HttpProvider", "FailingProvider",
    "FixtureRule", "OracleProvider", "ScriptedProvider", "scripted_complete",
]
