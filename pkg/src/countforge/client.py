"""Vision-chat client interface, an HTTP implementation, and reply parsing.

The HTTP client speaks the common chat-completions vision convention: one
user message whose content holds the images as base64 data URLs followed by
the text prompt. The endpoint base URL and model name come from
EndpointConfig; the API key is read from the environment variable the
config names, so credentials never live in configuration files.
"""

from __future__ import annotations

import base64
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

import requests

from .errors import AuthError, HttpError, NoCountFound, RetriesExhausted, Timeout


@dataclass(frozen=True)
class VisionQuery:
    """One request: ordered images plus a text instruction."""

    images: tuple[tuple[bytes, str], ...]
    prompt: str
    max_tokens: int = 64
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.images:
            raise ValueError("a vision query needs at least one image")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class ModelReply:
    text: str
    latency_ms: float = 0.0
    raw: object = None


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = "COUNTFORGE_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 1
    concurrent_request_limit: int = 4

    def __post_init__(self) -> None:
        if not re.match(r"^https?://", self.base_url):
            raise ValueError(f"base_url must be an http(s) URL, got {self.base_url!r}")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.concurrent_request_limit < 1:
            raise ValueError("concurrent_request_limit must be >= 1")


class VisionClient(Protocol):
    """Anything that can answer a VisionQuery."""

    def query(self, q: VisionQuery) -> ModelReply: ...


def build_chat_payload(q: VisionQuery, model_name: str) -> dict:
    """Chat-completions request body for one query."""
    content: list[dict] = [
        {
            "type": "image_url",
            "image_url": {
                "url": f"data:{media};base64,{base64.b64encode(data).decode('ascii')}"
            },
        }
        for data, media in q.images
    ]
    content.append({"type": "text", "text": q.prompt})
    return {
        "model": model_name,
        "messages": [{"role": "user", "content": content}],
        "max_tokens": q.max_tokens,
        "temperature": q.temperature,
    }


class HttpVisionClient:
    """Chat-completions HTTP client with bounded concurrency and retries.

    Transient failures (connection errors, timeouts, 429 and 5xx statuses)
    are retried up to ``max_retries`` times with exponential backoff; auth
    failures and other 4xx statuses are raised immediately.
    """

    def __init__(self, config: EndpointConfig, backoff_s: float = 0.5):
        self.config = config
        self.backoff_s = backoff_s
        self._semaphore = threading.Semaphore(config.concurrent_request_limit)
        self._session = requests.Session()
        adapter = requests.adapters.HTTPAdapter(
            pool_connections=config.concurrent_request_limit,
            pool_maxsize=config.concurrent_request_limit,
        )
        self._session.mount("http://", adapter)
        self._session.mount("https://", adapter)

    @property
    def endpoint_url(self) -> str:
        return self.config.base_url.rstrip("/") + "/chat/completions"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env_var, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _attempt(self, payload: dict) -> ModelReply:
        start = time.perf_counter()
        try:
            response = self._session.post(
                self.endpoint_url,
                json=payload,
                headers=self._headers(),
                timeout=self.config.timeout_s,
            )
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"request exceeded {self.config.timeout_s}s") from exc
        except requests.exceptions.RequestException as exc:
            raise HttpError(0, f"transport failure: {exc}") from exc
        latency_ms = (time.perf_counter() - start) * 1000.0
        if response.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({response.status_code})")
        if response.status_code >= 400:
            raise HttpError(response.status_code, response.text[:200])
        body = response.json()
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise HttpError(response.status_code, f"malformed reply body: {exc}") from exc
        return ModelReply(text=text, latency_ms=latency_ms, raw=body)

    def query(self, q: VisionQuery) -> ModelReply:
        payload = build_chat_payload(q, self.config.model_name)
        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        with self._semaphore:
            for attempt in range(attempts):
                try:
                    return self._attempt(payload)
                except AuthError:
                    raise
                except HttpError as exc:
                    # Retry only statuses that can heal on their own.
                    if exc.status not in (0, 429) and not 500 <= exc.status < 600:
                        raise
                    last_error = exc
                except Timeout as exc:
                    last_error = exc
                if attempt < attempts - 1:
                    time.sleep(self.backoff_s * (2**attempt))
        if attempts == 1 and isinstance(last_error, Timeout):
            raise last_error
        raise RetriesExhausted(attempts, last_error)


_INT_TOKEN = re.compile(r"\d{1,3}(?:,\d{3})+|\d+")


def parse_count(text: str, position: str = "first") -> int:
    """Extract a non-negative integer count from a model reply.

    Takes the first integer token by default (matching the trained reply
    template ``a photo of <num> <category>``), or the last when
    ``position="last"`` for chatty models. Thousands separators are
    stripped. Raises NoCountFound when the text has no integer token.
    """
    if position not in ("first", "last"):
        raise ValueError(f"position must be 'first' or 'last', got {position!r}")
    matches = _INT_TOKEN.findall(text or "")
    if not matches:
        raise NoCountFound(f"no integer token in reply {text!r}")
    token = matches[0] if position == "first" else matches[-1]
    return int(token.replace(",", ""))


@dataclass
class ScriptedVisionClient:
    """Deterministic in-process client that replays canned replies.

    Useful for wiring tests: replies are matched by prompt substring in
    registration order, with an optional default.
    """

    replies: list[tuple[str, str]] = field(default_factory=list)
    default: str | None = None

    def add(self, prompt_contains: str, reply_text: str) -> None:
        self.replies.append((prompt_contains, reply_text))

    def query(self, q: VisionQuery) -> ModelReply:
        for needle, text in self.replies:
            if needle in q.prompt:
                return ModelReply(text=text)
        if self.default is not None:
            return ModelReply(text=self.default)
        raise HttpError(0, f"no scripted reply for prompt {q.prompt!r}")
