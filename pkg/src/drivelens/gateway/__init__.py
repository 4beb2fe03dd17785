"""Model access layer: one call surface, pluggable backends, caching and accounting."""

from .cache import CompletionCache
from .client import (
    Backend,
    CostLedger,
    Gateway,
    LedgerSnapshot,
    cache_key,
    estimate_image_tokens,
    estimate_tokens,
    estimate_text_tokens,
    request_fingerprint,
)
from .http import OpenAICompatBackend
from .mock import (
    SCENE_ID_TAG,
    MockScriptError,
    OracleMockBackend,
    ScriptedMockBackend,
    fixture_header,
)
from .ratelimit import RateLimiter
from .types import (
    KIND_HTTP,
    KIND_MOCK,
    BackendReply,
    BackendStatusError,
    ChatRequest,
    ChatResponse,
    GatewayError,
    GatewayTimeoutError,
    ImageAttachment,
    ModelSpec,
    TransientBackendFailure,
    TransportExhaustedError,
)

__all__ = [
    "KIND_HTTP",
    "KIND_MOCK",
    "SCENE_ID_TAG",
    "Backend",
    "BackendReply",
    "BackendStatusError",
    "ChatRequest",
    "ChatResponse",
    "CompletionCache",
    "CostLedger",
    "Gateway",
    "GatewayError",
    "GatewayTimeoutError",
    "ImageAttachment",
    "LedgerSnapshot",
    "MockScriptError",
    "ModelSpec",
    "OpenAICompatBackend",
    "OracleMockBackend",
    "RateLimiter",
    "ScriptedMockBackend",
    "TransientBackendFailure",
    "TransportExhaustedError",
    "cache_key",
    "estimate_image_tokens",
    "estimate_text_tokens",
    "estimate_tokens",
    "fixture_header",
    "request_fingerprint",
]
