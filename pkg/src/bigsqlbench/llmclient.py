"""Uniform chat backend abstraction: HTTP provider APIs plus offline replay.

Every exchange reports token usage; when a provider omits it, counts are
estimated (length/4) and flagged so cost reports can separate measured from
estimated spend.  Recordings are JSON lines keyed by a request fingerprint
and replay deterministically.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, IO, Sequence

import requests

_WS_RE = re.compile(r"\s+")

DEFAULT_TEMPERATURE = 0.0
DEFAULT_TOP_P = 1.0
DEFAULT_MAX_TOKENS = 4096


class LlmTransportError(RuntimeError):
    """Provider unreachable or returned malformed output after retries."""


class ReplayMismatchError(RuntimeError):
    """Live request diverged from the recorded request fingerprint."""


class ReplayExhaustedError(RuntimeError):
    """More completions requested than the replay script contains."""


@dataclass(frozen=True)
class SamplingConfig:
    """Sampling knobs; None means the field is omitted from the request."""

    temperature: float | None = DEFAULT_TEMPERATURE
    top_p: float | None = DEFAULT_TOP_P
    max_tokens: int | None = DEFAULT_MAX_TOKENS

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        if self.top_p is not None:
            payload["top_p"] = self.top_p
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        return payload


@dataclass
class ChatExchange:
    """One request/response turn with its token usage."""

    response_text: str
    tool_call: dict[str, Any] | None = None
    input_tokens: int = 0
    output_tokens: int = 0
    estimated: bool = False

    def response_json_dict(self) -> dict[str, Any]:
        return {"text": self.response_text, "tool_call": self.tool_call}


def fingerprint_messages(messages: Sequence[dict[str, str]]) -> str:
    """Hash of role-tagged message texts, insensitive to whitespace runs."""
    hasher = hashlib.sha256()
    for message in messages:
        role = message.get("role", "")
        content = _WS_RE.sub(" ", str(message.get("content", ""))).strip()
        hasher.update(role.encode())
        hasher.update(b"\x00")
        hasher.update(content.encode())
        hasher.update(b"\x01")
    return hasher.hexdigest()


def estimate_tokens(text: str) -> int:
    """Tokenizer-free approximation: one token per four characters."""
    return max(1, len(text) // 4) if text else 0


def _estimate_input_tokens(messages: Sequence[dict[str, str]]) -> int:
    return sum(estimate_tokens(str(m.get("content", ""))) for m in messages)


class LlmBackend:
    """Interface both transports implement."""

    kind: str = "abstract"
    model_id: str = ""

    def complete(
        self,
        messages: Sequence[dict[str, str]],
        tool_schemas: Sequence[dict[str, Any]] | None = None,
    ) -> ChatExchange:
        raise NotImplementedError

    def fresh(self) -> "LlmBackend":
        """A backend instance safe to hand to a new episode."""
        return self


class ReplayBackend(LlmBackend):
    """Deterministic backend that serves pre-recorded exchanges in order.

    Entries carrying a fingerprint are verified against the live request;
    hand-authored scripts may omit fingerprints to skip verification.
    """

    kind = "replay"

    def __init__(self, entries: list[dict[str, Any]], model_id: str = "replay"):
        self.entries = entries
        self.model_id = model_id
        self._cursor = 0

    @classmethod
    def from_path(cls, path: str | Path, model_id: str = "replay") -> "ReplayBackend":
        """Load a script file; episode logs expand to their embedded exchanges."""
        entries: list[dict[str, Any]] = []
        with open(path) as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record.get("type") == "iteration":
                    entries.extend(record.get("exchanges", []))
                elif "response" in record:
                    entries.append(record)
        return cls(entries, model_id=model_id)

    def fresh(self) -> "ReplayBackend":
        return ReplayBackend(self.entries, model_id=self.model_id)

    @property
    def remaining(self) -> int:
        return len(self.entries) - self._cursor

    def complete(
        self,
        messages: Sequence[dict[str, str]],
        tool_schemas: Sequence[dict[str, Any]] | None = None,
    ) -> ChatExchange:
        if self._cursor >= len(self.entries):
            raise ReplayExhaustedError(
                f"replay script exhausted after {len(self.entries)} exchanges"
            )
        entry = self.entries[self._cursor]
        self._cursor += 1
        expected = entry.get("fingerprint")
        if expected:
            actual = fingerprint_messages(messages)
            if actual != expected:
                raise ReplayMismatchError(
                    f"request fingerprint {actual[:12]} does not match recorded "
                    f"{expected[:12]} at exchange {self._cursor}"
                )
        response = entry.get("response", {})
        usage = entry.get("usage") or {}
        text = response.get("text", "")
        if "input_tokens" in usage and "output_tokens" in usage:
            return ChatExchange(
                response_text=text,
                tool_call=response.get("tool_call"),
                input_tokens=int(usage["input_tokens"]),
                output_tokens=int(usage["output_tokens"]),
            )
        return ChatExchange(
            response_text=text,
            tool_call=response.get("tool_call"),
            input_tokens=_estimate_input_tokens(messages),
            output_tokens=estimate_tokens(text),
            estimated=True,
        )


class HttpBackend(LlmBackend):
    """Chat-completions transport over an OpenAI-compatible HTTP endpoint.

    Credentials come from the environment only; transient failures retry
    with exponential backoff and the wait counts toward episode time.
    """

    kind = "http-api"

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        api_key_env: str | None = None,
        sampling: SamplingConfig | None = None,
        supports_tools: bool = False,
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
        timeout_seconds: float = 120.0,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.api_key_env = api_key_env
        self.sampling = sampling or SamplingConfig()
        self.supports_tools = supports_tools
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.timeout_seconds = timeout_seconds

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise LlmTransportError(
                    f"environment variable {self.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(
        self,
        messages: Sequence[dict[str, str]],
        tool_schemas: Sequence[dict[str, Any]] | None = None,
    ) -> ChatExchange:
        payload: dict[str, Any] = {
            "model": self.model_id,
            "messages": list(messages),
        }
        payload.update(self.sampling.to_payload())
        if self.supports_tools and tool_schemas:
            payload["tools"] = list(tool_schemas)

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout_seconds,
                )
                if response.status_code >= 500:
                    last_error = LlmTransportError(
                        f"server error {response.status_code}"
                    )
                    continue
                response.raise_for_status()
                return self._parse(response.json(), messages)
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_error = exc
        raise LlmTransportError(
            f"llm request failed after {self.max_attempts} attempts: {last_error}"
        )

    def _parse(
        self, data: dict[str, Any], messages: Sequence[dict[str, str]]
    ) -> ChatExchange:
        choice = data["choices"][0]
        message = choice.get("message", {})
        text = message.get("content") or ""
        tool_call = None
        calls = message.get("tool_calls") or []
        if calls:
            function = calls[0].get("function", {})
            arguments = function.get("arguments", "{}")
            if isinstance(arguments, str):
                try:
                    arguments = json.loads(arguments)
                except json.JSONDecodeError:
                    arguments = {"raw": arguments}
            tool_call = {"name": function.get("name", ""), "arguments": arguments}
        usage = data.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            return ChatExchange(
                response_text=text,
                tool_call=tool_call,
                input_tokens=int(usage["prompt_tokens"]),
                output_tokens=int(usage["completion_tokens"]),
            )
        return ChatExchange(
            response_text=text,
            tool_call=tool_call,
            input_tokens=_estimate_input_tokens(messages),
            output_tokens=estimate_tokens(text),
            estimated=True,
        )


@dataclass
class RecordingBackend(LlmBackend):
    """Wraps a live backend and appends every exchange to a replayable sink."""

    inner: LlmBackend
    sink: IO[str]
    recorded: int = field(default=0)

    def __post_init__(self) -> None:
        self.kind = self.inner.kind
        self.model_id = self.inner.model_id

    def complete(
        self,
        messages: Sequence[dict[str, str]],
        tool_schemas: Sequence[dict[str, Any]] | None = None,
    ) -> ChatExchange:
        exchange = self.inner.complete(messages, tool_schemas)
        line = {
            "fingerprint": fingerprint_messages(messages),
            "response": exchange.response_json_dict(),
            "usage": {
                "input_tokens": exchange.input_tokens,
                "output_tokens": exchange.output_tokens,
            },
        }
        self.sink.write(json.dumps(line) + "\n")
        self.sink.flush()
        self.recorded += 1
        return exchange


def record_session(backend: LlmBackend, sink: IO[str]) -> RecordingBackend:
    """Wrap a backend so every exchange lands in a replayable recording."""
    return RecordingBackend(inner=backend, sink=sink)
