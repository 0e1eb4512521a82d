"""Client for chat-completion HTTP endpoints, plus a deterministic mock.

The wire format is the widely used chat-completions shape: POST a JSON body
``{"model", "messages": [{"role": "user", "content": ...}], "max_tokens",
"temperature", "seed"}`` and read ``choices[0].message.content`` back.

Transient failures (timeouts, connection errors, 5xx) are retried with
exponential backoff up to ``max_retries``; with retries configured, exhaustion
raises :class:`RetriesExhausted`, while ``max_retries=0`` surfaces the
underlying error directly.  Anything non-transient (4xx, unusable body) raises
:class:`ServiceError` immediately.

:class:`MockGateway` answers from a script -- responses keyed by the exact
prompt or its SHA-256 digest, or an ordered per-call sequence -- so pipelines
can run byte-reproducibly with no model in the loop.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .errors import RetriesExhausted, ServiceError

BACKOFF_BASE_S = 0.5


@dataclass(frozen=True)
class CompletionRequest:
    """A single prompt for the model."""

    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0  # deterministic decoding unless callers opt out
    seed: int | None = None


@dataclass(frozen=True)
class GatewayConfig:
    """Where and how to reach the completion endpoint."""

    endpoint: str
    model_id: str
    timeout_s: float = 30.0
    max_retries: int = 2
    api_key: str | None = None
    max_tokens_ceiling: int = 4096


def prompt_digest(prompt: str) -> str:
    """Stable SHA-256 hex digest used to key scripted mock responses."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _validate(cfg: GatewayConfig, req: CompletionRequest) -> None:
    if not req.prompt:
        raise ValueError("prompt must be non-empty")
    if not 1 <= req.max_tokens <= cfg.max_tokens_ceiling:
        raise ValueError(
            f"max_tokens {req.max_tokens} outside [1, {cfg.max_tokens_ceiling}]"
        )
    if req.temperature < 0:
        raise ValueError("temperature must be non-negative")


class HttpGateway:
    """Talks to a real endpoint.  One instance may be shared across threads."""

    def __init__(
        self,
        cfg: GatewayConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._session = session or requests.Session()
        self._sleep = sleep

    def _attempt(self, req: CompletionRequest) -> str:
        cfg = self.cfg
        body: dict = {
            "model": cfg.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        try:
            resp = self._session.post(
                cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout_s
            )
        except requests.Timeout as e:
            raise TimeoutError(f"no response within {cfg.timeout_s}s") from e
        except requests.ConnectionError as e:
            raise ServiceError(None, str(e), transient=True) from e
        if resp.status_code >= 500:
            raise ServiceError(resp.status_code, resp.text, transient=True)
        if resp.status_code != 200:
            raise ServiceError(resp.status_code, resp.text)
        try:
            data = resp.json()
        except ValueError as e:
            raise ServiceError(resp.status_code, "response body is not JSON") from e
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ServiceError(resp.status_code, "missing choices[0].message.content") from e
        if not isinstance(content, str):
            raise ServiceError(resp.status_code, "message content is not a string")
        return content

    def complete(self, req: CompletionRequest) -> str:
        _validate(self.cfg, req)
        attempts = self.cfg.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                return self._attempt(req)
            except TimeoutError as e:
                last = e
            except ServiceError as e:
                if not e.transient:
                    raise
                last = e
            if attempt < attempts - 1:
                self._sleep(BACKOFF_BASE_S * 2**attempt)
        assert last is not None
        if self.cfg.max_retries == 0:
            raise last
        raise RetriesExhausted(
            f"{attempts} attempts failed; last error: {last}"
        ) from last


def complete(cfg: GatewayConfig, req: CompletionRequest) -> str:
    """One-shot convenience wrapper around :class:`HttpGateway`."""
    return HttpGateway(cfg).complete(req)


class MockGateway:
    """Scripted gateway double with the same ``complete`` surface.

    Responses are looked up by exact prompt first, then by prompt digest,
    then from the ordered ``sequence`` (consumed one per call, thread-safe).
    Identical scripted prompts always yield identical responses.
    """

    def __init__(
        self,
        script: Mapping[str, str] | None = None,
        sequence: Sequence[str] | None = None,
    ):
        self._script = dict(script or {})
        self._sequence = list(sequence or [])
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "MockGateway":
        """Load a JSON object mapping SHA-256 prompt digests to responses."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("mock script file must hold a JSON object")
        return cls(script=data)

    def complete(self, req: CompletionRequest) -> str:
        digest = prompt_digest(req.prompt)
        with self._lock:
            self.calls.append(req)
            if req.prompt in self._script:
                return self._script[req.prompt]
            if digest in self._script:
                return self._script[digest]
            if self._sequence:
                return self._sequence.pop(0)
        raise ServiceError(None, f"no scripted response for prompt digest {digest[:12]}")
