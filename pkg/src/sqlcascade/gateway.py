"""Chat-completion gateway with live HTTP, record, and replay modes.

Every agent call goes through :class:`LlmGateway`. In ``record`` mode each
live response is persisted keyed by a fingerprint of (model, messages,
temperature); in ``replay`` mode the recorded responses are returned in
FIFO order per fingerprint and no network client is ever constructed.
Transcripts are JSON-lines so fixtures stay hand-editable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import BackendUnavailable, ReplayExhausted, ReplayMiss

logger = logging.getLogger(__name__)

RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


@dataclass
class ChatRequest:
    """One chat-completion call as issued by an agent."""

    model_id: str
    messages: list[dict[str, str]]
    temperature: float = 0.0
    max_tokens: int = 1200
    request_tag: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].get("role") not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")

    @property
    def fingerprint(self) -> str:
        """Stable hash of model, messages, and temperature.

        Deliberately excludes max_tokens (fixtures survive budget tweaks)
        and request_tag (renaming a stage must not invalidate transcripts).
        """
        payload = [
            self.model_id,
            self.temperature,
            [[m["role"], m["content"]] for m in self.messages],
        ]
        blob = json.dumps(payload, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ChatResponse:
    """Model output plus bookkeeping."""

    content: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0
    source: str = "live"


class HttpBackend:
    """OpenAI-style chat-completions endpoint with bounded retries.

    Retries transport errors and rate-limit/server statuses with exponential
    backoff; anything else fails fast. The HTTP client is created lazily so
    constructing a backend performs no network activity.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        client: httpx.Client | None = None,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._client = client

    def _get_client(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout)
        return self._client

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            started = time.monotonic()
            try:
                response = self._get_client().post(url, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("%s: attempt %d failed (%s)", request.request_tag, attempt + 1, last_error)
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last_error = f"status {response.status_code}"
                logger.warning("%s: attempt %d failed (%s)", request.request_tag, attempt + 1, last_error)
                continue
            if response.status_code != 200:
                raise BackendUnavailable(
                    f"{request.request_tag}: backend returned {response.status_code}: {response.text[:200]}"
                )
            body = response.json()
            try:
                choice = body["choices"][0]
                content = choice["message"]["content"] or ""
                finish = choice.get("finish_reason") or "stop"
            except (KeyError, IndexError, TypeError) as exc:
                raise BackendUnavailable(f"{request.request_tag}: malformed backend response: {exc}") from exc
            usage = body.get("usage") or {}
            return ChatResponse(
                content=content,
                finish_reason=finish,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                latency=time.monotonic() - started,
                source="live",
            )
        raise BackendUnavailable(f"{request.request_tag}: backend unavailable after {self.max_attempts} attempts ({last_error})")


class TranscriptStore:
    """Recorded responses keyed by request fingerprint, FIFO per key.

    When bound to a path, every recorded entry is appended to the file as one
    JSON line. Consumption and writes are serialized internally.
    """

    def __init__(self, path: Path | None = None):
        self.path = path
        self._records: dict[str, deque[dict]] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: Path | str) -> "TranscriptStore":
        store = cls(path=Path(path))
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{line_no}: not valid JSON: {exc}") from exc
                store._records.setdefault(record["fingerprint"], deque()).append(record)
        return store

    def __len__(self) -> int:
        return sum(len(q) for q in self._records.values())

    def record(self, request: ChatRequest, response: ChatResponse) -> dict:
        entry = {
            "fingerprint": request.fingerprint,
            "request_tag": request.request_tag,
            "model_id": request.model_id,
            "temperature": request.temperature,
            "messages": request.messages,
            "response": {
                "content": response.content,
                "finish_reason": response.finish_reason,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
            },
        }
        with self._lock:
            self._records.setdefault(entry["fingerprint"], deque()).append(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
        return entry

    def pop(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            queue = self._records.get(request.fingerprint)
            if queue is None:
                raise ReplayMiss(
                    f"no recorded response for {request.request_tag!r} "
                    f"(fingerprint {request.fingerprint[:12]}...)"
                )
            if not queue:
                raise ReplayExhausted(
                    f"recorded responses for {request.request_tag!r} already consumed "
                    f"(fingerprint {request.fingerprint[:12]}...)"
                )
            record = queue.popleft()
        payload = record["response"]
        return ChatResponse(
            content=payload["content"],
            finish_reason=payload.get("finish_reason", "stop"),
            prompt_tokens=int(payload.get("prompt_tokens", 0)),
            completion_tokens=int(payload.get("completion_tokens", 0)),
            latency=0.0,
            source="replay",
        )


class LlmGateway:
    """Uniform completion interface for all agents.

    mode="live"   -> backend call only.
    mode="record" -> backend call, then persist (fingerprint -> response).
    mode="replay" -> recorded response only; an unrecorded fingerprint is an
                     error, never a silent live call.
    """

    def __init__(
        self,
        mode: str,
        backend: HttpBackend | object | None = None,
        store: TranscriptStore | None = None,
        model_id: str = "gpt-4",
        temperature: float = 0.0,
        max_tokens: int = 1200,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode in ("live", "record") and backend is None:
            raise ValueError(f"mode {mode!r} requires a backend")
        if mode in ("record", "replay") and store is None:
            raise ValueError(f"mode {mode!r} requires a transcript store")
        self.mode = mode
        self.backend = backend
        self.store = store
        self.model_id = model_id
        self.temperature = temperature
        self.max_tokens = max_tokens
        self._usage_lock = threading.Lock()
        self.total_prompt_tokens = 0
        self.total_completion_tokens = 0
        self.call_count = 0

    def _account(self, response: ChatResponse) -> None:
        with self._usage_lock:
            self.call_count += 1
            self.total_prompt_tokens += max(0, response.prompt_tokens)
            self.total_completion_tokens += max(0, response.completion_tokens)

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.mode == "replay":
            response = self.store.pop(request)
        else:
            response = self.backend.complete(request)
            if self.mode == "record":
                self.store.record(request, response)
        self._account(response)
        return response

    def ask(self, tag: str, prompt: str) -> ChatResponse:
        """Single-user-message completion with the gateway's model defaults."""
        request = ChatRequest(
            model_id=self.model_id,
            messages=[{"role": "user", "content": prompt}],
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            request_tag=tag,
        )
        return self.complete(request)
