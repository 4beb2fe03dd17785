"""HTTP backend speaking the OpenAI-compatible chat completions shape."""

from __future__ import annotations

import os
from typing import Any

import httpx

from .types import BackendReply, ChatRequest, ModelSpec, TransientBackendFailure


def _extract_text(message_content: Any) -> str:
    # Servers answer either with a plain string or a list of typed parts.
    if isinstance(message_content, str):
        return message_content
    if isinstance(message_content, list):
        parts = []
        for part in message_content:
            if isinstance(part, dict) and part.get("type") == "text":
                parts.append(part.get("text", ""))
        return "".join(parts)
    return ""


class OpenAICompatBackend:
    """POSTs to ``{base_url}/chat/completions`` with a bearer token from the environment."""

    def __init__(self, spec: ModelSpec, client: httpx.Client | None = None):
        self.spec = spec
        self._client = client or httpx.Client(timeout=spec.timeout_s)

    def build_payload(self, request: ChatRequest) -> dict:
        user_content: Any
        if request.image is not None:
            user_content = [
                {"type": "text", "text": request.user},
                {"type": "image_url", "image_url": {"url": request.image.data_uri}},
            ]
        else:
            user_content = request.user
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": user_content})
        return {
            "model": self.spec.name,
            "messages": messages,
            "temperature": self.spec.temperature,
            "max_tokens": request.max_output_tokens or self.spec.max_output_tokens,
        }

    def send(self, request: ChatRequest) -> BackendReply:
        headers = {}
        token = os.environ.get(self.spec.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        url = self.spec.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, json=self.build_payload(request), headers=headers)
        except httpx.TimeoutException as exc:
            raise TransientBackendFailure(f"timeout: {exc}", timed_out=True) from exc
        except httpx.HTTPError as exc:
            raise TransientBackendFailure(f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise TransientBackendFailure(
                f"backend answered {resp.status_code}", status=resp.status_code
            )
        try:
            data = resp.json()
            text = _extract_text(data["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransientBackendFailure(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return BackendReply(
            text,
            input_tokens=usage.get("prompt_tokens"),
            output_tokens=usage.get("completion_tokens"),
        )
