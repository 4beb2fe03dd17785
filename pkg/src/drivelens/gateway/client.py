"""The gateway: caching, retries, rate limiting and accounting around a backend."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from ..imageprep import token_scale_factor
from .cache import CompletionCache
from .ratelimit import RateLimiter
from .types import (
    BackendReply,
    BackendStatusError,
    ChatRequest,
    ChatResponse,
    GatewayTimeoutError,
    TransientBackendFailure,
    TransportExhaustedError,
)


class Backend(Protocol):
    def send(self, request: ChatRequest) -> BackendReply: ...


def request_fingerprint(request: ChatRequest) -> str:
    """Stable digest of everything that determines a completion.

    Model name, temperature, both text fields, the image content digest
    and the output budget.  Same fingerprint, same answer (at
    temperature 0); it doubles as the cache key.
    """
    material = json.dumps(
        {
            "model": request.model.name,
            "temperature": request.model.temperature,
            "system": request.system,
            "user": request.user,
            "image": request.image.digest if request.image else None,
            "max_output_tokens": request.max_output_tokens or request.model.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


cache_key = request_fingerprint


def estimate_text_tokens(text: str) -> int:
    """Character-based estimate: one token per 4 characters, rounded up."""
    return (len(text) + 3) // 4


def estimate_image_tokens(level: int, base_tokens: int) -> int:
    """Image cost at a resolution level, scaled from the base-level cost."""
    return round(base_tokens * token_scale_factor(level))


def estimate_tokens(text: str, image_level: int | None = None, image_base_tokens: int = 258) -> int:
    """Estimated token count of a prompt: text part plus optional image part."""
    total = estimate_text_tokens(text)
    if image_level is not None:
        total += estimate_image_tokens(image_level, image_base_tokens)
    return total


@dataclass
class LedgerSnapshot:
    responses: int
    cache_hits: int
    total_cost: float
    total_input_tokens: int
    total_output_tokens: int


class CostLedger:
    """Thread-safe spend accounting.  Cache hits add zero cost."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._responses = 0
        self._cache_hits = 0
        self._cost = 0.0
        self._input_tokens = 0
        self._output_tokens = 0

    def add(self, response: ChatResponse) -> None:
        with self._lock:
            self._responses += 1
            if response.cache_hit:
                self._cache_hits += 1
            self._cost += response.billed_cost
            self._input_tokens += response.input_tokens
            self._output_tokens += response.output_tokens

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(
                self._responses,
                self._cache_hits,
                self._cost,
                self._input_tokens,
                self._output_tokens,
            )


class Gateway:
    """Single entry point for model calls.

    Order of duties on ``complete``: serve from cache if possible, else
    take a rate-limit slot, retry transient failures with exponential
    backoff, account tokens and cost, store to cache.
    """

    def __init__(
        self,
        backend: Backend,
        cache: CompletionCache | None = None,
        limiter: RateLimiter | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.cache = cache
        self.limiter = limiter
        self.ledger = CostLedger()
        self._sleep = sleeper

    def _cost(self, request: ChatRequest, input_tokens: int, output_tokens: int) -> float:
        spec = request.model
        return (
            input_tokens * spec.input_price_per_mtok / 1_000_000
            + output_tokens * spec.output_price_per_mtok / 1_000_000
        )

    def _from_cache_record(self, request: ChatRequest, record: dict) -> ChatResponse:
        input_tokens = int(record["input_tokens"])
        output_tokens = int(record["output_tokens"])
        return ChatResponse(
            text=record["text"],
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            image_tokens=record.get("image_tokens"),
            tokens_estimated=bool(record.get("tokens_estimated", False)),
            latency_s=0.0,
            cost=self._cost(request, input_tokens, output_tokens),
            cache_hit=True,
            attempt_count=0,
        )

    def _attempt_loop(self, request: ChatRequest) -> tuple[BackendReply, int]:
        spec = request.model
        last: TransientBackendFailure | None = None
        for attempt in range(spec.max_retries + 1):
            try:
                return self.backend.send(request), attempt
            except TransientBackendFailure as exc:
                last = exc
                if attempt < spec.max_retries:
                    self._sleep(spec.backoff_base_s * (2**attempt))
        assert last is not None
        key = cache_key(request)
        attempts = spec.max_retries + 1
        if last.timed_out:
            raise GatewayTimeoutError(str(last), key, attempts) from last
        if last.status is not None:
            raise BackendStatusError(str(last), key, attempts, last.status) from last
        raise TransportExhaustedError(str(last), key, attempts) from last

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = cache_key(request)
        if self.cache is not None:
            record = self.cache.get(key)
            if record is not None:
                response = self._from_cache_record(request, record)
                self.ledger.add(response)
                return response

        started = time.perf_counter()
        if self.limiter is not None:
            with self.limiter.slot():
                reply, attempt = self._attempt_loop(request)
        else:
            reply, attempt = self._attempt_loop(request)
        latency = time.perf_counter() - started

        spec = request.model
        estimated = reply.input_tokens is None or reply.output_tokens is None
        image_tokens: int | None = None
        if reply.input_tokens is None:
            input_tokens = estimate_text_tokens(request.system) + estimate_text_tokens(request.user)
            if request.image is not None:
                image_tokens = estimate_image_tokens(request.image.level, spec.image_base_tokens)
                input_tokens += image_tokens
        else:
            input_tokens = reply.input_tokens
        output_tokens = (
            estimate_text_tokens(reply.text) if reply.output_tokens is None else reply.output_tokens
        )

        response = ChatResponse(
            text=reply.text,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            image_tokens=image_tokens,
            tokens_estimated=estimated,
            latency_s=latency,
            cost=self._cost(request, input_tokens, output_tokens),
            cache_hit=False,
            attempt_count=attempt,
        )
        if self.cache is not None:
            self.cache.put(
                key,
                {
                    "text": response.text,
                    "input_tokens": response.input_tokens,
                    "output_tokens": response.output_tokens,
                    "image_tokens": response.image_tokens,
                    "tokens_estimated": response.tokens_estimated,
                },
            )
        self.ledger.add(response)
        return response
