"""Chat-completion client for a remote judgment backbone."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Any

import httpx
from pydantic import BaseModel

from .base import JudgmentRequest, JudgmentResponse, ProviderError, ProviderFatal, safe_default, validate_result
from .prompts import render
from .schemas import parse_action_list

log = logging.getLogger(__name__)

MAX_TOKENS = {
    "perceive": 256,
    "verdict": 256,
    "threshold": 128,
    "emulate": 512,
    "propagate": 64,
    "risk": 64,
    "empirical": 64,
    "normative": 64,
    "benefit": 64,
    "legitimacy": 64,
}


@dataclass
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model: str = "gpt-4o-2024-08-06"
    token_env: str = "PAVESIM_API_TOKEN"
    timeout_s: float = 60.0
    max_in_flight: int = 4
    prompt_dir: str | None = None
    max_tokens: dict[str, int] = field(default_factory=lambda: dict(MAX_TOKENS))


def extract_json(text: str) -> Any:
    """Pull the first JSON object out of a reply that may carry prose or code fences."""
    start = text.find("{")
    if start < 0:
        raise ValueError("no JSON object in reply")
    obj, _ = json.JSONDecoder().raw_decode(text[start:])
    return obj


class RemoteProvider:
    name = "remote"

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None) -> None:
        self.config = config
        token = os.environ.get(config.token_env, "")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(
            base_url=config.base_url, headers=headers, timeout=config.timeout_s, transport=transport
        )
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self._lock = threading.Lock()
        self.calls = 0
        self.malformed = 0
        self.degraded = 0

    @property
    def malformed_fraction(self) -> float:
        return self.malformed / self.calls if self.calls else 0.0

    def close(self) -> None:
        self._client.close()

    def probe(self) -> None:
        """Fail fast before a run: an endpoint that cannot be reached at all is fatal."""
        try:
            resp = self._client.get("/models")
        except httpx.TransportError as exc:
            raise ProviderFatal(f"endpoint {self.config.base_url} unreachable: {exc}") from exc
        if resp.status_code in (401, 403):
            raise ProviderFatal(f"endpoint rejected credentials (HTTP {resp.status_code})")

    def evaluate(self, req: JudgmentRequest) -> JudgmentResponse:
        prompt = render(req.op, req.payload, self.config.prompt_dir)
        raw = ""
        for attempt in (1, 2):
            raw = self._complete(req.op, prompt)
            try:
                result = self._parse(req.op, raw)
            except ValueError as exc:
                with self._lock:
                    self.malformed += 1
                log.warning("malformed %s reply for %s at tick %d (attempt %d): %s",
                            req.op, req.agent_id, req.tick, attempt, exc)
                continue
            return JudgmentResponse(req.op, result, raw=raw, attempts=attempt)
        with self._lock:
            self.degraded += 1
        return JudgmentResponse(req.op, safe_default(req), raw=raw, attempts=2, degraded=True)

    def _parse(self, op: str, raw: str) -> BaseModel:
        if op == "emulate":
            return parse_action_list(raw)
        try:
            data = extract_json(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"bad JSON: {exc}") from exc
        return validate_result(op, data)

    def _complete(self, op: str, prompt: str) -> str:
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": self.config.max_tokens.get(op, 256),
        }
        with self._slots:
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.TransportError as exc:
                raise ProviderError(f"transport failure: {exc}") from exc
        with self._lock:
            self.calls += 1
        if resp.status_code in (401, 403):
            raise ProviderFatal(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 404:
            raise ProviderFatal("chat-completion endpoint not found (HTTP 404)")
        if resp.status_code >= 500 or resp.status_code == 429:
            raise ProviderError(f"endpoint unavailable (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise ProviderFatal(f"request refused (HTTP {resp.status_code})")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError):
            # an unreadable envelope is treated like a malformed answer
            return ""
