"""Gateway value types and errors."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import ImageInput
from ..imageprep import BASE_LEVEL, encode_for_wire

KIND_HTTP = "openai_compatible_http"
KIND_MOCK = "mock"

_KINDS = (KIND_HTTP, KIND_MOCK)


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to talk to one model and account for it."""

    name: str
    kind: str
    base_url: str = ""
    fixture_path: str = ""
    input_price_per_mtok: float = 0.0
    output_price_per_mtok: float = 0.0
    timeout_s: float = 60.0
    max_retries: int = 2
    backoff_base_s: float = 0.5
    temperature: float = 0.0
    max_output_tokens: int = 1024
    image_base_tokens: int = 258
    max_in_flight: int = 8
    requests_per_minute: int = 0
    token_env: str = "DRIVELENS_API_TOKEN"

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("model name must be non-empty")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == KIND_HTTP and not self.base_url:
            raise ValueError(f"model {self.name}: HTTP backend requires base_url")
        if self.input_price_per_mtok < 0 or self.output_price_per_mtok < 0:
            raise ValueError(f"model {self.name}: prices must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError(f"model {self.name}: timeout must be > 0")
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise ValueError(f"model {self.name}: invalid retry or concurrency settings")
        if self.temperature < 0:
            raise ValueError(f"model {self.name}: temperature must be >= 0")


@dataclass(frozen=True)
class ImageAttachment:
    """Wire-ready image payload.

    ``digest`` is the content digest of the encoded bytes and feeds the
    cache key; ``image_id`` is the logical source id, which deterministic
    mock backends use to find sidecar data.
    """

    data_uri: str
    digest: str
    image_id: str
    level: int

    @classmethod
    def from_image(cls, image: ImageInput, level: int = int(BASE_LEVEL)) -> "ImageAttachment":
        return cls(encode_for_wire(image.data), image.digest, image.image_id, int(level))


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion request."""

    model: ModelSpec
    system: str
    user: str
    image: ImageAttachment | None = None
    max_output_tokens: int | None = None


@dataclass(frozen=True)
class ChatResponse:
    """One completed (or cache-served) chat completion.

    ``attempt_count`` is the number of failed attempts before success;
    cache hits always report 0.  ``cost`` follows the token/price formula
    unconditionally; use ``billed_cost`` for spend accounting so cache
    hits add nothing.
    """

    text: str
    input_tokens: int
    output_tokens: int
    image_tokens: int | None
    tokens_estimated: bool
    latency_s: float
    cost: float
    cache_hit: bool
    attempt_count: int

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")
        if self.latency_s < 0:
            raise ValueError("latency must be >= 0")
        if self.cache_hit and self.attempt_count != 0:
            raise ValueError("cache hits report attempt_count == 0")

    @property
    def billed_cost(self) -> float:
        return 0.0 if self.cache_hit else self.cost


@dataclass
class BackendReply:
    """Raw backend result; token fields stay None when usage is not reported."""

    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None


class TransientBackendFailure(Exception):
    """Internal signal: this attempt failed but a retry may succeed."""

    def __init__(self, message: str, status: int | None = None, timed_out: bool = False):
        super().__init__(message)
        self.status = status
        self.timed_out = timed_out


class GatewayError(Exception):
    """Completion failed after all retries; carries the request cache key."""

    def __init__(self, message: str, cache_key: str, attempts: int):
        super().__init__(message)
        self.cache_key = cache_key
        self.attempts = attempts


class TransportExhaustedError(GatewayError):
    """Network-level failures on every attempt."""


class GatewayTimeoutError(GatewayError):
    """Timed out on the final attempt."""


class BackendStatusError(GatewayError):
    """Backend kept answering with a non-success HTTP status."""

    def __init__(self, message: str, cache_key: str, attempts: int, status: int):
        super().__init__(message, cache_key, attempts)
        self.status = status
