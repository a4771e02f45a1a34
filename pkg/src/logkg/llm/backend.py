"""Chat backends: an OpenAI-style remote client and a deterministic stub.

The stub answers from a fixture document::

    {
      "responses": {"<key>": "<payload>" | ["<payload>", ...]},
      "rules": [{"contains": "<substring of final user message>", "responses": [...]}],
      "default": "<payload>" | [...] | null
    }

``<key>`` is :func:`stub_key` of the final user message of the request that
opened the interaction; correction rounds reuse the interaction's key, so a
list of payloads scripts successive attempts. The n-th call for a key returns
the n-th payload (the last one repeats). A payload may also be an object
``{"error": "timeout" | "no_tool_call" | "http", "status": 500}`` to simulate
failures.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx

from ..errors import BackendError, BackendHTTPError, BackendTimeout, ConfigError, NoToolCall

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")
DEFAULT_TEMPERATURE = 0.7
MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str
    tool_payload: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.tool_payload is not None and self.role not in ("tool", "assistant"):
            raise ValueError("tool_payload only allowed on tool or assistant messages")

    def to_wire(self) -> dict[str, Any]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[ChatMessage, ...]
    output_schema: Mapping[str, Any] | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_attempts_remaining: int = MAX_ATTEMPTS
    tool_name: str = "emit_knowledge_graph"
    tool_description: str = ""
    interaction_key: str | None = None

    def __post_init__(self) -> None:
        if self.max_attempts_remaining > MAX_ATTEMPTS:
            raise ValueError(f"max_attempts_remaining must be <= {MAX_ATTEMPTS}")

    @property
    def final_user_message(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "stub"
    endpoint: str | None = None
    model_id: str = "stub"
    timeout_s: float = 60.0
    retry_count: int = 2
    retry_backoff_s: float = 1.0
    temperature: float = DEFAULT_TEMPERATURE
    api_key_env: str | None = None
    fixtures: Any = None  # path or parsed fixture document (stub only)

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "stub"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError("remote backend requires an endpoint")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Path | None = None) -> BackendConfig:
        retry = doc.get("retry", {})
        fixtures = doc.get("fixtures")
        if isinstance(fixtures, str) and base_dir is not None:
            fixtures = str((base_dir / fixtures).resolve())
        return cls(
            kind=doc.get("kind", "stub"),
            endpoint=doc.get("endpoint"),
            model_id=doc.get("model_id", "stub"),
            timeout_s=float(doc.get("timeout_s", 60.0)),
            retry_count=int(retry.get("count", 2)),
            retry_backoff_s=float(retry.get("backoff_s", 1.0)),
            temperature=float(doc.get("temperature", DEFAULT_TEMPERATURE)),
            api_key_env=doc.get("api_key_env"),
            fixtures=fixtures,
        )

    def describe(self) -> dict[str, Any]:
        out = {"kind": self.kind, "model_id": self.model_id, "temperature": self.temperature}
        if self.kind == "remote":
            out["endpoint"] = self.endpoint
        return out


class Backend(Protocol):
    model_id: str

    def invoke(self, req: GenerationRequest) -> str: ...


def stub_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class StubBackend:
    def __init__(self, fixtures: Mapping[str, Any] | str | Path | None = None, model_id: str = "stub") -> None:
        if isinstance(fixtures, (str, Path)):
            try:
                fixtures = json.loads(Path(fixtures).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read stub fixtures {fixtures}: {exc}") from exc
        doc = dict(fixtures or {})
        self.model_id = model_id
        self._responses: dict[str, list] = {k: _as_list(v) for k, v in doc.get("responses", {}).items()}
        self._rules = [(r["contains"], _as_list(r["responses"])) for r in doc.get("rules", [])]
        self._default = _as_list(doc["default"]) if doc.get("default") is not None else None
        self._counts: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()
        self.calls: list[GenerationRequest] = []

    def _script_for(self, key: str, text: str) -> list | None:
        if key in self._responses:
            return self._responses[key]
        for needle, script in self._rules:
            if needle in text:
                return script
        return self._default

    def invoke(self, req: GenerationRequest) -> str:
        text = req.final_user_message
        key = req.interaction_key or stub_key(text)
        with self._lock:
            self.calls.append(req)
            script = self._script_for(key, text)
            if script is None:
                raise BackendError(f"stub has no response for key {key}")
            n = self._counts[key]
            self._counts[key] = n + 1
        item = script[min(n, len(script) - 1)]
        if isinstance(item, Mapping):
            err = item.get("error")
            if err == "timeout":
                raise BackendTimeout("stub timeout")
            if err == "no_tool_call":
                raise NoToolCall(str(item.get("content", "")))
            if err == "http":
                raise BackendHTTPError(int(item.get("status", 500)))
            return json.dumps(item, sort_keys=True, separators=(",", ":"))
        if isinstance(item, list):
            return json.dumps(item)
        return str(item)


def _as_list(v: Any) -> list:
    return list(v) if isinstance(v, list) else [v]


class RemoteBackend:
    """Chat-completions client; output schemas are sent as a forced tool call."""

    def __init__(self, cfg: BackendConfig, client: httpx.Client | None = None, sleep=time.sleep) -> None:
        self.cfg = cfg
        self.model_id = cfg.model_id
        self._client = client or httpx.Client(timeout=cfg.timeout_s)
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            token = os.environ.get(self.cfg.api_key_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def request_body(self, req: GenerationRequest) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.cfg.model_id,
            "messages": [m.to_wire() for m in req.messages],
            "temperature": req.temperature,
        }
        if req.output_schema is not None:
            body["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": req.tool_name,
                        "description": req.tool_description,
                        "parameters": req.output_schema,
                    },
                }
            ]
            body["tool_choice"] = {"type": "function", "function": {"name": req.tool_name}}
        return body

    def _post_once(self, body: dict[str, Any]) -> dict[str, Any]:
        try:
            resp = self._client.post(self.cfg.endpoint, json=body, headers=self._headers(), timeout=self.cfg.timeout_s)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"transport error: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendHTTPError(resp.status_code, resp.text)
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError("response is not JSON") from exc

    def invoke(self, req: GenerationRequest) -> str:
        body = self.request_body(req)
        attempt = 0
        while True:
            try:
                doc = self._post_once(body)
                break
            except (BackendTimeout, BackendHTTPError) as exc:
                retriable = isinstance(exc, BackendTimeout) or exc.status == 429 or exc.status >= 500
                if not retriable or attempt >= self.cfg.retry_count:
                    raise
                delay = self.cfg.retry_backoff_s * (2**attempt)
                log.warning("backend call failed (%s); retrying in %.1fs", exc, delay)
                self._sleep(delay)
                attempt += 1
        return extract_payload(doc, structured=req.output_schema is not None)


def extract_payload(doc: Mapping[str, Any], *, structured: bool) -> str:
    """First tool call's arguments (structured) or the message content."""
    try:
        message = doc["choices"][0]["message"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError("response has no choices[0].message") from exc
    if not structured:
        return message.get("content") or ""
    calls = message.get("tool_calls") or []
    if not calls:
        raise NoToolCall(message.get("content") or "")
    args = calls[0].get("function", {}).get("arguments")
    if args is None:
        raise NoToolCall(message.get("content") or "")
    return args if isinstance(args, str) else json.dumps(args)


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "stub":
        return StubBackend(cfg.fixtures, model_id=cfg.model_id)
    return RemoteBackend(cfg)


def invoke(req: GenerationRequest, backend: Backend | BackendConfig) -> str:
    if isinstance(backend, BackendConfig):
        backend = make_backend(backend)
    return backend.invoke(req)


def request(
    messages: Sequence[ChatMessage],
    *,
    schema: Mapping[str, Any] | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    **kw: Any,
) -> GenerationRequest:
    return GenerationRequest(tuple(messages), schema, temperature, **kw)


__all__ = [
    "Backend",
    "BackendConfig",
    "ChatMessage",
    "GenerationRequest",
    "RemoteBackend",
    "StubBackend",
    "extract_payload",
    "invoke",
    "make_backend",
    "request",
    "stub_key",
]
