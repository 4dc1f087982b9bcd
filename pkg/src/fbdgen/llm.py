"""Chat-completion client abstraction with transcript recording, content-
addressed replay archives and token cost accounting.

Replay archives are directories of JSON files keyed by a digest of the
request messages, so a recorded run replays bit-identically regardless of
timing or the order of unrelated steps, and editing one prompt template
invalidates exactly the affected entries.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import httpx


class LlmUnavailable(Exception):
    pass


class LlmTimeout(LlmUnavailable):
    pass


class ReplayMiss(LlmUnavailable):
    def __init__(self, step: str, digest: str):
        self.step = step
        self.digest = digest
        super().__init__(f"replay archive has no entry for step '{step}' (digest {digest[:12]})")


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass
class TranscriptEntry:
    step_name: str
    request: list[ChatMessage]
    response: str
    input_tokens: int
    output_tokens: int
    wall_time: float

    def to_json(self) -> dict:
        return {
            "step_name": self.step_name,
            "request": [m.to_json() for m in self.request],
            "response": self.response,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "wall_time": self.wall_time,
        }


@dataclass
class LlmTranscript:
    model_id: str = ""
    entries: list[TranscriptEntry] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self.entries.append(entry)

    def total_input_tokens(self) -> int:
        return sum(e.input_tokens for e in self.entries)

    def total_output_tokens(self) -> int:
        return sum(e.output_tokens for e in self.entries)

    def to_json(self) -> dict:
        return {"model_id": self.model_id, "entries": [e.to_json() for e in self.entries]}


def request_digest(messages: list[ChatMessage]) -> str:
    payload = json.dumps([[m.role, m.content] for m in messages], ensure_ascii=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def cost_estimate(transcript: LlmTranscript, price_in_per_mtok: float, price_out_per_mtok: float) -> float:
    """Token cost in USD at the given per-million-token prices."""
    if price_in_per_mtok < 0 or price_out_per_mtok < 0:
        raise ValueError("prices must be >= 0")
    return (
        transcript.total_input_tokens() * price_in_per_mtok
        + transcript.total_output_tokens() * price_out_per_mtok
    ) / 1e6


class LlmClient:
    """Base client: complete() returns (text, input_tokens, output_tokens)
    and records every exchange in the shared transcript."""

    # Deterministic clients report zero wall time so replayed run records
    # stay byte-identical.
    deterministic_time = False

    def __init__(self, model_id: str = ""):
        self.transcript = LlmTranscript(model_id=model_id)

    def complete(self, messages: list[ChatMessage], step_name: str = "") -> tuple[str, int, int]:
        started = time.monotonic()
        text, tok_in, tok_out = self._complete(messages, step_name)
        self.transcript.append(
            TranscriptEntry(
                step_name=step_name,
                request=list(messages),
                response=text,
                input_tokens=tok_in,
                output_tokens=tok_out,
                wall_time=0.0 if self.deterministic_time else time.monotonic() - started,
            )
        )
        return text, tok_in, tok_out

    def _complete(self, messages: list[ChatMessage], step_name: str) -> tuple[str, int, int]:
        raise NotImplementedError


class LiveClient(LlmClient):
    """HTTP chat-completions client with capped exponential-backoff retries."""

    MAX_RETRIES = 3
    BACKOFF_BASE_S = 2.0

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        model_id: str,
        timeout_s: float = 120.0,
        sleep: Callable[[float], None] = time.sleep,
        http_client: Optional[httpx.Client] = None,
    ):
        super().__init__(model_id=model_id)
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._sleep = sleep
        self._http = http_client or httpx.Client(timeout=timeout_s)

    @classmethod
    def from_env(cls, env=os.environ) -> "LiveClient":
        try:
            return cls(
                endpoint=env["FBDGEN_LLM_ENDPOINT"],
                api_key=env.get("FBDGEN_LLM_API_KEY", ""),
                model_id=env.get("FBDGEN_LLM_MODEL", "gpt-5"),
            )
        except KeyError as exc:
            raise LlmUnavailable(f"missing environment variable {exc}") from None

    def _complete(self, messages: list[ChatMessage], step_name: str) -> tuple[str, int, int]:
        payload = {"model": self.transcript.model_id, "messages": [m.to_json() for m in messages]}
        last_error: Optional[Exception] = None
        for attempt in range(self.MAX_RETRIES):
            try:
                response = self._http.post(
                    f"{self.endpoint}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                )
                if response.status_code >= 500 or response.status_code == 429:
                    raise LlmUnavailable(f"HTTP {response.status_code}")
                response.raise_for_status()
                data = response.json()
                usage = data.get("usage", {})
                return (
                    data["choices"][0]["message"]["content"],
                    int(usage.get("prompt_tokens", 0)),
                    int(usage.get("completion_tokens", 0)),
                )
            except (httpx.TimeoutException,) as exc:
                last_error = LlmTimeout(str(exc))
            except (httpx.HTTPError, LlmUnavailable, KeyError) as exc:
                last_error = exc if isinstance(exc, LlmUnavailable) else LlmUnavailable(str(exc))
            if attempt < self.MAX_RETRIES - 1:
                self._sleep(self.BACKOFF_BASE_S * (2**attempt))
        if isinstance(last_error, LlmUnavailable):
            raise last_error
        raise LlmUnavailable(str(last_error))


class ReplayClient(LlmClient):
    """Serves responses from a recorded archive; any unrecorded request is a
    ReplayMiss naming the step that issued it."""

    deterministic_time = True

    def __init__(self, archive_dir: str | Path, model_id: str = "replay"):
        super().__init__(model_id=model_id)
        self.archive_dir = Path(archive_dir)

    def _complete(self, messages: list[ChatMessage], step_name: str) -> tuple[str, int, int]:
        digest = request_digest(messages)
        path = self.archive_dir / f"{digest}.json"
        if not path.exists():
            raise ReplayMiss(step_name, digest)
        entry = json.loads(path.read_text(encoding="utf-8"))
        usage = entry.get("usage", {})
        return (
            entry["response"],
            int(usage.get("input_tokens", 0)),
            int(usage.get("output_tokens", 0)),
        )


class RecordingClient(LlmClient):
    """Wraps another client and writes every exchange into a replay archive."""

    def __init__(self, inner: LlmClient, archive_dir: str | Path):
        super().__init__(model_id=inner.transcript.model_id)
        self.inner = inner
        self.deterministic_time = inner.deterministic_time
        self.archive_dir = Path(archive_dir)
        self.archive_dir.mkdir(parents=True, exist_ok=True)

    def _complete(self, messages: list[ChatMessage], step_name: str) -> tuple[str, int, int]:
        text, tok_in, tok_out = self.inner._complete(messages, step_name)
        digest = request_digest(messages)
        entry = {
            "digest": digest,
            "step": step_name,
            "request": {"messages": [m.to_json() for m in messages]},
            "response": text,
            "usage": {"input_tokens": tok_in, "output_tokens": tok_out},
        }
        path = self.archive_dir / f"{digest}.json"
        path.write_text(json.dumps(entry, indent=2, ensure_ascii=True) + "\n", encoding="utf-8")
        return text, tok_in, tok_out


class ScriptedClient(LlmClient):
    """Deterministic in-process client driven by a callback; used to build
    replay archives and to exercise the workflow in tests."""

    deterministic_time = True

    def __init__(self, script: Callable[[str, list[ChatMessage]], str], model_id: str = "scripted"):
        super().__init__(model_id=model_id)
        self.script = script

    def _complete(self, messages: list[ChatMessage], step_name: str) -> tuple[str, int, int]:
        text = self.script(step_name, messages)
        tok_in = sum(len(m.content) for m in messages) // 4
        tok_out = len(text) // 4
        return text, tok_in, tok_out


def make_client(spec: str, model_id: str = "gpt-5") -> LlmClient:
    """Build a client from a CLI-style spec: 'live' or 'replay:<dir>'."""
    if spec == "live":
        return LiveClient.from_env()
    if spec.startswith("replay:"):
        return ReplayClient(spec.split(":", 1)[1], model_id=model_id)
    raise ValueError(f"unknown llm spec '{spec}' (use 'live' or 'replay:<dir>')")
