"""HTTP provider adapters normalizing three wire dialects onto the one
chat-completion contract:

- ``openai_chat``: POST /chat/completions with choices[].message.content
- ``google_chat``: POST /models/{model}:generateContent with candidates[]
- ``reasoning_chat``: openai_chat shape plus a separate reasoning text
  field, which is carried through to transcripts but never parsed

Credentials come from environment variables only, named per provider.
"""
from __future__ import annotations

import os
import time
from typing import Optional

import httpx

from ..retry import TransientFailure
from .core import AuthFailed, ChatRequest, ChatResponse, ProviderRejected

DIALECTS = ("openai_chat", "google_chat", "reasoning_chat")

_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}
_AUTH_STATUSES = {401, 403}


class HttpProvider:
    def __init__(self, provider_id: str, *, base_url: str, dialect: str,
                 api_key_env: Optional[str] = None,
                 client: Optional[httpx.Client] = None,
                 timeout_s: float = 60.0):
        if dialect not in DIALECTS:
            raise ValueError(f"unknown dialect {dialect!r}; expected one of {DIALECTS}")
        self.provider_id = provider_id
        self.base_url = base_url.rstrip("/")
        self.dialect = dialect
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout_s)

    def _api_key(self) -> str:
        if not self.api_key_env:
            return ""
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AuthFailed(
                f"provider {self.provider_id}: environment variable {self.api_key_env} is not set")
        return key

    def send(self, request: ChatRequest) -> ChatResponse:
        url, headers, payload = self._build(request)
        started = time.monotonic()
        try:
            response = self._client.post(url, headers=headers, json=payload)
        except httpx.TimeoutException as exc:
            raise TransientFailure("timeout", str(exc)) from exc
        except httpx.TransportError as exc:
            raise TransientFailure("unreachable", str(exc)) from exc
        latency = time.monotonic() - started
        if response.status_code in _AUTH_STATUSES:
            raise AuthFailed(f"provider {self.provider_id}: status {response.status_code}")
        if response.status_code in _TRANSIENT_STATUSES:
            raise TransientFailure(f"http_{response.status_code}", response.text[:200])
        if response.status_code >= 400:
            raise ProviderRejected(response.status_code, response.text[:500])
        try:
            body = response.json()
            parsed = self._parse(body)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderRejected(response.status_code,
                                   f"unparseable response body: {exc}") from exc
        return ChatResponse(
            text=parsed["text"],
            finish_reason=parsed["finish_reason"],
            prompt_tokens=parsed["prompt_tokens"],
            completion_tokens=parsed["completion_tokens"],
            latency_s=latency,
            reasoning=parsed.get("reasoning"),
        )

    # --- request building ----------------------------------------------------

    def _build(self, request: ChatRequest):
        if self.dialect == "google_chat":
            return self._build_google(request)
        return self._build_openai(request)

    def _build_openai(self, request: ChatRequest):
        url = f"{self.base_url}/chat/completions"
        headers = {}
        key = self._api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": request.model_id,
            "messages": [{"role": role, "content": text} for role, text in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        return url, headers, payload

    def _build_google(self, request: ChatRequest):
        url = f"{self.base_url}/models/{request.model_id}:generateContent"
        headers = {}
        key = self._api_key()
        if key:
            headers["x-goog-api-key"] = key
        contents = []
        system_texts = []
        for role, text in request.messages:
            if role == "system":
                system_texts.append(text)
                continue
            contents.append({
                "role": "model" if role == "assistant" else "user",
                "parts": [{"text": text}],
            })
        payload = {
            "contents": contents,
            "generationConfig": {
                "temperature": request.temperature,
                "maxOutputTokens": request.max_output_tokens,
            },
        }
        if system_texts:
            payload["systemInstruction"] = {"parts": [{"text": "\n".join(system_texts)}]}
        return url, headers, payload

    # --- response parsing ------------------------------------------------------

    def _parse(self, body: dict) -> dict:
        if self.dialect == "google_chat":
            candidate = body["candidates"][0]
            parts = candidate["content"]["parts"]
            text = "".join(part.get("text", "") for part in parts)
            finish = candidate.get("finishReason", "STOP")
            usage = body.get("usageMetadata", {})
            return {
                "text": text,
                "finish_reason": "stop" if finish == "STOP" else
                                 ("length" if finish == "MAX_TOKENS" else "error"),
                "prompt_tokens": usage.get("promptTokenCount", 0),
                "completion_tokens": usage.get("candidatesTokenCount", 0),
            }
        choice = body["choices"][0]
        message = choice["message"]
        usage = body.get("usage", {})
        parsed = {
            "text": message.get("content") or "",
            "finish_reason": choice.get("finish_reason", "stop"),
            "prompt_tokens": usage.get("prompt_tokens", 0),
            "completion_tokens": usage.get("completion_tokens", 0),
        }
        if parsed["finish_reason"] not in ("stop", "length"):
            parsed["finish_reason"] = "error"
        if self.dialect == "reasoning_chat":
            parsed["reasoning"] = message.get("reasoning_content")
        return parsed
