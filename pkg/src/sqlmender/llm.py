"""Chat-completions clients: a real OpenAI-compatible HTTP client and a
deterministic scripted backend used by tests and the benchmark harness.

Both expose the same two calls: ``chat`` (full response text) and
``chat_stream`` (per-delta callback, returns the concatenation). No network
retry happens here; transport failures surface to the self-healing loop,
which treats them as a consumed iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import httpx

from .errors import (
    LlmHttpError,
    LlmStreamError,
    LlmTimeout,
    LlmUnreachable,
    ScriptExhausted,
)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role: {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}

    @classmethod
    def from_dict(cls, data: dict) -> "ChatMessage":
        return cls(role=data["role"], content=data["content"])


@dataclass(frozen=True)
class LlmParams:
    model: str
    base_url: str
    api_key: str = ""
    temperature: float = 0.1
    timeout_s: float = 120.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.base_url.startswith(("http://", "https://")):
            raise ValueError(f"base_url is not a URL: {self.base_url!r}")


class OpenAIChatClient:
    """Blocking client for any ``/chat/completions`` endpoint."""

    def __init__(self, params: LlmParams, transport: Optional[httpx.BaseTransport] = None):
        self.params = params
        self._client = httpx.Client(
            base_url=params.base_url.rstrip("/"),
            timeout=params.timeout_s,
            transport=transport,
        )

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.params.api_key:
            headers["Authorization"] = f"Bearer {self.params.api_key}"
        return headers

    def _body(self, messages: Sequence[ChatMessage], stream: bool) -> dict:
        if not messages:
            raise ValueError("messages must be non-empty")
        return {
            "model": self.params.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": self.params.temperature,
            "stream": stream,
        }

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        body = self._body(messages, stream=False)
        try:
            response = self._client.post(
                "/chat/completions", json=body, headers=self._headers()
            )
        except httpx.TimeoutException as exc:
            raise LlmTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise LlmUnreachable(str(exc)) from exc
        if response.status_code >= 400:
            raise LlmHttpError(response.status_code, response.text)
        data = response.json()
        return data["choices"][0]["message"]["content"]

    def chat_stream(
        self, messages: Sequence[ChatMessage], on_chunk: Callable[[str], None]
    ) -> str:
        body = self._body(messages, stream=True)
        delivered: List[str] = []
        try:
            with self._client.stream(
                "POST", "/chat/completions", json=body, headers=self._headers()
            ) as response:
                if response.status_code >= 400:
                    response.read()
                    raise LlmHttpError(response.status_code, response.text)
                for line in response.iter_lines():
                    line = line.strip()
                    if not line.startswith("data:"):
                        continue
                    payload = line[len("data:"):].strip()
                    if payload == "[DONE]":
                        break
                    try:
                        delta = json.loads(payload)["choices"][0]["delta"]
                    except (ValueError, LookupError):
                        continue
                    content = delta.get("content")
                    if content:
                        delivered.append(content)
                        on_chunk(content)
        except httpx.TimeoutException as exc:
            raise LlmStreamError(str(exc), partial="".join(delivered)) from exc
        except httpx.HTTPError as exc:
            if delivered:
                raise LlmStreamError(str(exc), partial="".join(delivered)) from exc
            raise LlmUnreachable(str(exc)) from exc
        return "".join(delivered)

    def close(self):
        self._client.close()


PlaybookEntry = Union[str, Sequence[str]]


@dataclass
class ScriptedLlmClient:
    """Deterministic backend that replays a fixed playbook, one entry per
    chat call. Entries may be plain strings or pre-chunked string lists (the
    chunking is only observable through ``chat_stream``). Calls beyond the
    playbook length raise :class:`ScriptExhausted`.
    """

    playbook: List[PlaybookEntry]
    call_count: int = 0
    requests: List[List[ChatMessage]] = field(default_factory=list)

    def _next(self, messages: Sequence[ChatMessage]) -> PlaybookEntry:
        if not messages:
            raise ValueError("messages must be non-empty")
        if self.call_count >= len(self.playbook):
            raise ScriptExhausted(
                f"playbook exhausted after {len(self.playbook)} calls"
            )
        entry = self.playbook[self.call_count]
        self.call_count += 1
        self.requests.append(list(messages))
        return entry

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        entry = self._next(messages)
        return entry if isinstance(entry, str) else "".join(entry)

    def chat_stream(
        self, messages: Sequence[ChatMessage], on_chunk: Callable[[str], None]
    ) -> str:
        entry = self._next(messages)
        chunks = [entry] if isinstance(entry, str) else list(entry)
        for chunk in chunks:
            if chunk:
                on_chunk(chunk)
        return "".join(chunks)

    def close(self):
        pass
