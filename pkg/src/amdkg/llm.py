"""Chat-completion clients: a live OpenAI-style HTTP client and a scripted mock.

Both expose the same contract: given a message list, a model name, and a
streaming flag, return the completion text or an iterator of text chunks.
The mock is deterministic for the same messages, which keeps the whole
pipeline testable offline.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator

import requests

from .errors import TransportError

Message = dict[str, str]  # {"role": "system"|"user"|"assistant", "content": ...}

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024


class ChatCompletionClient:
    """Behavior contract for chat-completion backends."""

    def complete(
        self, messages: list[Message], model: str, stream: bool = False
    ) -> str | Iterator[str]:
        raise NotImplementedError


class OpenAiChatClient(ChatCompletionClient):
    """Client for any OpenAI-compatible ``/chat/completions`` endpoint.

    Works against hosted APIs and local servers (Ollama, llama.cpp, vLLM)
    alike; only the base URL and model name differ.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.temperature = temperature
        self.max_tokens = max_tokens

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, messages, model, stream=False):
        payload = {
            "model": model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stream": stream,
        }
        url = f"{self.base_url}/chat/completions"
        try:
            resp = requests.post(
                url, json=payload, headers=self._headers(),
                timeout=self.timeout, stream=stream,
            )
        except requests.RequestException as exc:
            raise TransportError(f"chat endpoint unreachable: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(
                f"chat endpoint returned {resp.status_code}", status=resp.status_code
            )
        if not stream:
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise TransportError(f"malformed completion response: {exc}") from exc
        return self._iter_stream(resp)

    @staticmethod
    def _iter_stream(resp) -> Iterator[str]:
        try:
            for raw in resp.iter_lines(decode_unicode=True):
                if not raw or not raw.startswith("data:"):
                    continue
                data = raw[len("data:"):].strip()
                if data == "[DONE]":
                    break
                try:
                    delta = json.loads(data)["choices"][0].get("delta", {})
                except (ValueError, KeyError, IndexError):
                    continue
                text = delta.get("content")
                if text:
                    yield text
        except requests.RequestException as exc:
            raise TransportError(f"stream interrupted: {exc}") from exc


class MockChatClient(ChatCompletionClient):
    """Scripted client for offline runs and tests.

    Responses are selected by the last user message: exact match first, then
    the first configured key that is a substring of it, then ``default``.
    ``fail_times`` makes the first N calls raise TransportError (retry tests).
    When ``capture_path`` is set, every call appends one JSON line with the
    model and messages it received, so tests can inspect the exact prompts.
    """

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        default: str = "",
        chunk_size: int = 7,
        fail_times: int = 0,
        capture_path: str | Path | None = None,
    ):
        self.responses = dict(responses or {})
        self.default = default
        self.chunk_size = max(1, chunk_size)
        self.fail_times = fail_times
        self.capture_path = Path(capture_path) if capture_path else None
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_script(cls, path: str | Path, capture_path: str | Path | None = None):
        """Load a scripted client from a JSON file.

        Schema: {"responses": {...}, "default": str, "chunk_size": int}.
        """
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            responses=data.get("responses", {}),
            default=data.get("default", ""),
            chunk_size=data.get("chunk_size", 7),
            capture_path=capture_path,
        )

    def _pick(self, messages: list[Message]) -> str:
        last_user = ""
        for msg in reversed(messages):
            if msg.get("role") == "user":
                last_user = msg.get("content", "")
                break
        if last_user in self.responses:
            return self.responses[last_user]
        for key in self.responses:
            if key and key in last_user:
                return self.responses[key]
        return self.default

    def complete(self, messages, model, stream=False):
        with self._lock:
            self.calls += 1
            if self.calls <= self.fail_times:
                raise TransportError("scripted transport failure")
            if self.capture_path:
                with self.capture_path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps({"model": model, "messages": messages}) + "\n")
        text = self._pick(messages)
        if not stream:
            return text
        return self._chunks(text)

    def _chunks(self, text: str) -> Iterator[str]:
        for i in range(0, len(text), self.chunk_size):
            yield text[i : i + self.chunk_size]
