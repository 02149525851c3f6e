"""HTTP proxy service wrapping the guardrail pipeline.

Speaks the chat-completions request schema on ``POST /v1/chat/completions``
and returns either an upstream-shaped reply (plus a ``guardrail`` verdict
block) or a structured refusal object. ``GET /healthz`` reports liveness;
``GET /metrics`` reports allow/redact/block counters per stage.
"""

from __future__ import annotations

import os
import threading
import uuid
from typing import Optional

from fastapi import FastAPI, Header, HTTPException
from pydantic import BaseModel, Field

from ..backends import ChatMessage, CompletionParams
from .pipeline import Guardrail


class MessageModel(BaseModel):
    role: str
    content: str


class ChatCompletionRequest(BaseModel):
    model: Optional[str] = None
    messages: list[MessageModel] = Field(min_length=1)
    temperature: Optional[float] = None
    max_tokens: Optional[int] = None


class _Counters:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.turns = 0
        self.decisions = {
            "outbound": {"allow": 0, "redact": 0, "block": 0},
            "inbound": {"allow": 0, "redact": 0, "block": 0},
        }

    def record(self, stage: str, verdict: str) -> None:
        with self._lock:
            self.decisions[stage][verdict] += 1

    def bump_turns(self) -> None:
        with self._lock:
            self.turns += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "turns": self.turns,
                "decisions": {
                    stage: dict(counts) for stage, counts in self.decisions.items()
                },
            }


def create_app(guardrail: Guardrail, auth_token_env: Optional[str] = None) -> FastAPI:
    """Build the proxy application around a configured guardrail."""
    app = FastAPI(title="roadguard", docs_url=None, redoc_url=None)
    counters = _Counters()
    app.state.guardrail = guardrail
    app.state.counters = counters
    expected_token = os.environ.get(auth_token_env) if auth_token_env else None

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.get("/metrics")
    def metrics() -> dict:
        return counters.snapshot()

    @app.post("/v1/chat/completions")
    def chat_completions(
        request: ChatCompletionRequest,
        x_session_id: Optional[str] = Header(default=None),
        authorization: Optional[str] = Header(default=None),
    ) -> dict:
        if expected_token is not None:
            if authorization != f"Bearer {expected_token}":
                raise HTTPException(status_code=401, detail="invalid or missing token")

        try:
            messages = [ChatMessage(role=m.role, content=m.content) for m in request.messages]
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

        session_id = x_session_id or "anonymous"
        params = CompletionParams(
            temperature=request.temperature,
            max_tokens=request.max_tokens,
        )
        result = guardrail.run_turn(session_id, messages, params)

        counters.bump_turns()
        counters.record("outbound", result.outbound.verdict)
        if result.inbound is not None:
            counters.record("inbound", result.inbound.verdict)

        if result.refusal is not None:
            return {
                "id": f"refusal-{uuid.uuid4().hex[:12]}",
                "object": "guardrail.refusal",
                "session_id": session_id,
                "refusal": result.refusal,
            }

        usage = result.usage
        return {
            "id": f"chatcmpl-{uuid.uuid4().hex[:12]}",
            "object": "chat.completion",
            "model": request.model or "",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": result.reply.content},
                "finish_reason": "stop",
            }],
            "usage": {
                "prompt_tokens": usage.prompt_tokens if usage else 0,
                "completion_tokens": usage.completion_tokens if usage else 0,
                "total_tokens": (usage.prompt_tokens + usage.completion_tokens) if usage else 0,
            },
            "guardrail": {
                "session_id": session_id,
                "outbound": result.outbound.verdict,
                "inbound": result.inbound.verdict if result.inbound else None,
            },
        }

    return app
