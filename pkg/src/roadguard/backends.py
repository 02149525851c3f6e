"""Chat backends: an HTTP chat-completions client and a scripted mock.

The wire shape is the de-facto chat-completions JSON: a ``messages``
array goes in, a ``choices`` array comes out (see README for the exact
request/response schema). Authentication material is referenced by
environment-variable name only; plaintext secrets never appear in
configuration files.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import httpx


class BackendError(Exception):
    """Base class for completion failures."""


class BackendTimeout(BackendError):
    """The backend did not answer within the configured timeout."""


class AuthFailure(BackendError):
    """Credentials missing or rejected."""


class RateLimited(BackendError):
    """The backend throttled us and retries were exhausted."""


class ProtocolError(BackendError):
    """The backend answered with something that is not a chat completion."""


class ScriptMiss(BackendError):
    """A scripted backend has no fixture for this request."""


ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not isinstance(self.content, str):
            raise ValueError("message content must be text")


@dataclass(frozen=True)
class CompletionParams:
    temperature: Optional[float] = None
    max_tokens: Optional[int] = None


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for one upstream chat-completions service."""

    name: str
    endpoint: str
    model: str
    auth_env: Optional[str] = None
    timeout_s: float = 30.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class UsageStats:
    prompt_tokens: int
    completion_tokens: int
    latency_s: float

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        if self.latency_s < 0:
            raise ValueError("latency must be non-negative")


def _approx_tokens(text: str) -> int:
    # Whitespace word count; only used when no tokenizer is wired in.
    return len(text.split())


def _count(tokenizer, text: str) -> int:
    return tokenizer.count(text) if tokenizer is not None else _approx_tokens(text)


def request_key(messages: Sequence[ChatMessage]) -> str:
    """Stable fingerprint of a message list, used as a fixture key."""
    canonical = json.dumps(
        [{"role": m.role, "content": m.content} for m in messages],
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpBackend:
    """Chat-completions client over HTTP/JSON.

    RateLimited and Timeout are retried with exponential backoff up to
    ``max_retries``; auth and protocol failures surface immediately.
    """

    def __init__(self, config: BackendConfig, tokenizer=None, backoff_base_s: float = 0.5):
        self.config = config
        self.tokenizer = tokenizer
        self.backoff_base_s = backoff_base_s

    @property
    def name(self) -> str:
        return self.config.name

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            secret = os.environ.get(self.config.auth_env)
            if not secret:
                raise AuthFailure(
                    f"environment variable {self.config.auth_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {secret}"
        return headers

    def _attempt(self, payload: dict) -> tuple[dict, float]:
        started = time.monotonic()
        try:
            response = httpx.post(
                self.config.endpoint,
                json=payload,
                headers=self._headers(),
                timeout=self.config.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"{self.config.name}: {exc}") from exc
        except httpx.HTTPError as exc:
            raise ProtocolError(f"{self.config.name}: {exc}") from exc
        latency = time.monotonic() - started

        if response.status_code in (401, 403):
            raise AuthFailure(f"{self.config.name}: HTTP {response.status_code}")
        if response.status_code == 429:
            raise RateLimited(f"{self.config.name}: HTTP 429")
        if response.status_code >= 400:
            raise ProtocolError(f"{self.config.name}: HTTP {response.status_code}")
        try:
            return response.json(), latency
        except ValueError as exc:
            raise ProtocolError(f"{self.config.name}: reply is not JSON") from exc

    def complete(
        self,
        messages: Sequence[ChatMessage],
        params: Optional[CompletionParams] = None,
    ) -> tuple[ChatMessage, UsageStats]:
        if not messages:
            raise ValueError("messages must be non-empty")
        params = params or CompletionParams()
        payload: dict = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        if params.temperature is not None:
            payload["temperature"] = params.temperature
        if params.max_tokens is not None:
            payload["max_tokens"] = params.max_tokens

        attempt = 0
        while True:
            try:
                body, latency = self._attempt(payload)
                break
            except (RateLimited, BackendTimeout):
                if attempt >= self.config.max_retries:
                    raise
                time.sleep(self.backoff_base_s * (2 ** attempt))
                attempt += 1

        try:
            message = body["choices"][0]["message"]
            reply = ChatMessage(role=message.get("role", "assistant"), content=message["content"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"{self.config.name}: malformed completion body") from exc

        reported = body.get("usage") or {}
        prompt_text = "\n".join(m.content for m in messages)
        # Backend-reported counts win over local counts.
        usage = UsageStats(
            prompt_tokens=int(reported.get("prompt_tokens", _count(self.tokenizer, prompt_text))),
            completion_tokens=int(reported.get("completion_tokens", _count(self.tokenizer, reply.content))),
            latency_s=latency,
        )
        return reply, usage


class ScriptedBackend:
    """Deterministic in-process backend: a fixture table plus a recorder.

    Holds no endpoint, performs no network activity, and reports a fixed
    latency so downstream metrics are reproducible. Requests without a
    fixture raise ScriptMiss unless a ``default_reply`` is set.
    """

    def __init__(
        self,
        fixtures: Optional[dict[str, str]] = None,
        tokenizer=None,
        latency_s: float = 0.0,
        name: str = "scripted",
        default_reply: Optional[str] = None,
    ):
        self.name = name
        self.tokenizer = tokenizer
        self.latency_s = latency_s
        self.default_reply = default_reply
        self._fixtures = dict(fixtures or {})
        self._lock = threading.Lock()
        self._requests: list[tuple[ChatMessage, ...]] = []

    @classmethod
    def from_pairs(
        cls,
        pairs: Sequence[tuple[Sequence[ChatMessage], str]],
        **kwargs,
    ) -> "ScriptedBackend":
        fixtures = {request_key(messages): reply for messages, reply in pairs}
        return cls(fixtures=fixtures, **kwargs)

    def add_fixture(self, messages: Sequence[ChatMessage], reply: str) -> None:
        self._fixtures[request_key(messages)] = reply

    @property
    def requests(self) -> list[tuple[ChatMessage, ...]]:
        """Every request received, in call order."""
        with self._lock:
            return list(self._requests)

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self._requests)

    def complete(
        self,
        messages: Sequence[ChatMessage],
        params: Optional[CompletionParams] = None,
    ) -> tuple[ChatMessage, UsageStats]:
        if not messages:
            raise ValueError("messages must be non-empty")
        with self._lock:
            self._requests.append(tuple(messages))
        key = request_key(messages)
        if key in self._fixtures:
            text = self._fixtures[key]
        elif self.default_reply is not None:
            text = self.default_reply
        else:
            raise ScriptMiss(f"no fixture for request {key[:12]}…")
        reply = ChatMessage(role="assistant", content=text)
        prompt_text = "\n".join(m.content for m in messages)
        usage = UsageStats(
            prompt_tokens=_count(self.tokenizer, prompt_text),
            completion_tokens=_count(self.tokenizer, reply.content),
            latency_s=self.latency_s,
        )
        return reply, usage


def complete(
    backend,
    messages: Sequence[ChatMessage],
    params: Optional[CompletionParams] = None,
) -> tuple[ChatMessage, UsageStats]:
    """Run one completion against a backend object or a bare BackendConfig."""
    if isinstance(backend, BackendConfig):
        backend = HttpBackend(backend)
    return backend.complete(messages, params)
