"""Uniform chat-completion interface for every model role in the pipeline.

Target models, the hint proposer, the editor, the annotator, and judges are
all "a model with a prompt": one client interface serves them all, with the
role carried entirely by prompt content and the ModelId. Three concrete
clients are provided: a deterministic scripted mock (fixture-driven), a
function-backed client for tests, and an HTTPS chat-completion adapter.

Requests are cached on disk under a content digest, so re-running a partially
completed pipeline resumes without re-issuing calls. The ``seed_tag`` field of
a request is an opaque cache-key component by contract; the pipeline sets it
to ``"<question_id>|<behavior>"`` and the scripted client relies on that
convention to route lookups.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .core import ModelId, TrialResponse


class TransportError(RuntimeError):
    """Remote call failed after the retry budget was exhausted."""


class UnconfiguredModelError(KeyError):
    """No client registered for the requested model."""


class ScriptError(LookupError):
    """A scripted client had neither a matching entry nor a default."""


@dataclass(frozen=True)
class ChatRequest:
    model: ModelId
    prompt: str
    image_ref: str | None = None
    temperature: float = 0.0
    top_p: float = 1.0
    seed_tag: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not (self.temperature >= 0.0 and self.temperature == self.temperature):
            raise ValueError("temperature must be finite and >= 0")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")


def seed_tag_for(question_id: str, behavior: str) -> str:
    """Canonical seed tag: question id and behavior key, pipe-separated."""
    return f"{question_id}|{behavior}"


def split_seed_tag(tag: str) -> tuple[str, str]:
    qid, _, behavior = tag.partition("|")
    return qid, behavior


def request_digest(request: ChatRequest) -> str:
    """Stable content digest used as the cache key."""
    payload = json.dumps(
        [
            request.model.name,
            request.prompt,
            request.image_ref or "",
            repr(request.temperature),
            repr(request.top_p),
            request.seed_tag,
        ],
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class DiskCache:
    """Write-once response cache keyed by request digest.

    Writes go through a temp file plus atomic rename; an existing entry is
    never overwritten, so retries cannot duplicate side effects.
    """

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["value"]

    def put(self, key: str, value: str) -> None:
        path = self._path(key)
        if path.exists():
            return
        entry = {"key": key, "value": value, "created_at": time.time()}
        tmp = path.with_suffix(f".tmp-{os.getpid()}-{threading.get_ident()}")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False)
        os.replace(tmp, path)


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


def format_answer_text(answer_index: int, reasoning: str = "") -> str:
    """Render the structured answer object the prompts ask models to emit."""
    letter = chr(ord("A") + answer_index)
    return json.dumps({"answer": letter, "reasoning": reasoning}, ensure_ascii=False)


@dataclass(frozen=True)
class ScriptedReply:
    """One scripted behavior: a fixed reply or a prompt-conditional choice."""

    answer_index: int | None = None
    reasoning: str = ""
    raw: str | None = None
    when_prompt_contains: str | None = None
    then_index: int | None = None
    else_index: int | None = None

    def render(self, request: ChatRequest) -> str:
        if self.when_prompt_contains is not None:
            hit = self.when_prompt_contains in request.prompt
            index = self.then_index if hit else self.else_index
            if index is None:
                raise ScriptError("conditional reply missing then/else index")
            return format_answer_text(index, self.reasoning)
        if self.raw is not None:
            return self.raw
        if self.answer_index is None:
            raise ScriptError("scripted reply has neither raw text nor an answer index")
        return format_answer_text(self.answer_index, self.reasoning)


class ScriptedClient:
    """Deterministic mock driven by (model, question id, behavior key) entries.

    Lookup tries the exact behavior key first, then its prefix before the
    colon (so an entry for ``base`` covers ``base:1``..``base:3``), and within
    each: exact question id before the ``*`` wildcard, exact model before the
    model wildcard. A lookup that matches nothing is a fixture bug and raises.
    """

    def __init__(self) -> None:
        self._table: dict[tuple[str, str, str], ScriptedReply] = {}

    def add(
        self,
        question_id: str,
        behavior: str,
        reply: ScriptedReply,
        model: str = "*",
    ) -> None:
        self._table[(model, question_id, behavior)] = reply

    @classmethod
    def from_fixture(cls, path: str | Path) -> "ScriptedClient":
        """Load JSON-lines of scripted behavior entries."""
        client = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ScriptError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                client.add(
                    question_id=obj.get("question_id", "*"),
                    behavior=obj["behavior"],
                    model=obj.get("model", "*"),
                    reply=ScriptedReply(
                        answer_index=obj.get("answer_index"),
                        reasoning=obj.get("reasoning", ""),
                        raw=obj.get("raw"),
                        when_prompt_contains=obj.get("when_prompt_contains"),
                        then_index=obj.get("then_index"),
                        else_index=obj.get("else_index"),
                    ),
                )
        return client

    def _lookup(self, model: str, question_id: str, behavior: str) -> ScriptedReply:
        behaviors = [behavior]
        prefix = behavior.split(":", 1)[0]
        if prefix != behavior:
            behaviors.append(prefix)
        for beh in behaviors:
            for m, q in ((model, question_id), ("*", question_id), (model, "*"), ("*", "*")):
                reply = self._table.get((m, q, beh))
                if reply is not None:
                    return reply
        raise ScriptError(f"no scripted entry for model={model!r} question={question_id!r} behavior={behavior!r}")

    def complete(self, request: ChatRequest) -> str:
        question_id, behavior = split_seed_tag(request.seed_tag)
        reply = self._lookup(request.model.name, question_id, behavior)
        return reply.render(request)


class FunctionClient:
    """Wraps a plain callable; handy for programmatic behaviors in tests."""

    def __init__(self, fn: Callable[[ChatRequest], str]) -> None:
        self._fn = fn

    def complete(self, request: ChatRequest) -> str:
        return self._fn(request)


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class HttpChatClient:
    """HTTPS chat-completion adapter with bounded exponential-backoff retry.

    Credentials come from the environment variable named per provider. Only
    transport-level failures are retried; a reply that fails MCQ parsing is a
    semantically meaningful outcome and is never retried here.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str,
        *,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise TransportError(f"credential env var {self.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}"}

    def _payload(self, request: ChatRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": request.prompt}]
        if request.image_ref:
            content.append({"type": "image_url", "image_url": {"url": request.image_ref}})
        return {
            "model": request.model.name,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "messages": [{"role": "user", "content": content}],
        }

    def complete(self, request: ChatRequest) -> str:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(self.endpoint, json=self._payload(request), headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {response.status_code} from {self.endpoint}")
                continue
            if response.status_code != 200:
                raise TransportError(f"HTTP {response.status_code} from {self.endpoint}: {response.text[:200]}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
        raise TransportError(f"retry budget exhausted after {self.max_attempts} attempts: {last_error}")


@dataclass(frozen=True)
class CallRecord:
    """One completed request, for budget accounting; remote=False is a cache hit."""

    model: str
    question_id: str
    behavior: str
    remote: bool


class ClientHub:
    """Registry of per-model clients with shared cache and parallelism bound."""

    def __init__(self, cache: DiskCache | None = None, parallelism: int = 8) -> None:
        self.cache = cache
        self.parallelism = parallelism
        self._clients: dict[str, ChatClient] = {}
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._lock = threading.Lock()
        self.call_log: list[CallRecord] = []

    def register(self, model: ModelId, client: ChatClient) -> None:
        with self._lock:
            self._clients[model.name] = client
            self._semaphores[model.name] = threading.BoundedSemaphore(self.parallelism)

    def register_all(self, models: list[ModelId], client: ChatClient) -> None:
        for model in models:
            self.register(model, client)

    def complete(self, request: ChatRequest) -> str:
        client = self._clients.get(request.model.name)
        if client is None:
            raise UnconfiguredModelError(request.model.name)
        key = request_digest(request)
        question_id, behavior = split_seed_tag(request.seed_tag)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                self._log(request.model.name, question_id, behavior, remote=False)
                return hit
        with self._semaphores[request.model.name]:
            text = client.complete(request)
        self._log(request.model.name, question_id, behavior, remote=True)
        if self.cache is not None:
            self.cache.put(key, text)
        return text

    def _log(self, model: str, question_id: str, behavior: str, remote: bool) -> None:
        with self._lock:
            self.call_log.append(CallRecord(model=model, question_id=question_id, behavior=behavior, remote=remote))

    def remote_call_count(self, question_id: str | None = None, model: str | None = None) -> int:
        return self._count(question_id, model, remote_only=True)

    def logical_call_count(self, question_id: str | None = None, model: str | None = None) -> int:
        """All completed requests, cache hits included: the per-query cost budget."""
        return self._count(question_id, model, remote_only=False)

    def _count(self, question_id: str | None, model: str | None, remote_only: bool) -> int:
        with self._lock:
            return sum(
                1
                for rec in self.call_log
                if (not remote_only or rec.remote)
                and (question_id is None or rec.question_id == question_id)
                and (model is None or rec.model == model)
            )


_LETTER_FALLBACK_RE = re.compile(r"(?:^|(?<=[\s\(\[>]))([A-Za-z])(?=[\.\)\]:,;!]|\s*$)", re.MULTILINE)


def extract_json_objects(text: str) -> list[dict]:
    """All parseable top-level JSON objects embedded in free text, in order."""
    decoder = json.JSONDecoder()
    objects: list[dict] = []
    idx = 0
    while True:
        start = text.find("{", idx)
        if start == -1:
            break
        try:
            obj, end = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            idx = start + 1
            continue
        if isinstance(obj, dict):
            objects.append(obj)
            idx = start + end
        else:
            idx = start + 1
    return objects


def parse_mcq(raw: str, n_options: int) -> TrialResponse:
    """Extract the chosen option from a model reply.

    Primary path: the last JSON answer object in the text ({"answer": "B",
    ...}). Fallback: the last standalone letter-with-delimiter pattern, which
    covers replies that ignore the format instruction. An out-of-range letter
    or no match at all yields parse_valid=False.
    """
    if n_options < 2:
        raise ValueError("n_options must be >= 2")
    answer_objects = [obj for obj in extract_json_objects(raw) if "answer" in obj]
    index: int | None = None
    reasoning: str | None = None
    if answer_objects:
        obj = answer_objects[-1]
        value = obj["answer"]
        if isinstance(value, bool):
            value = None
        if isinstance(value, int):
            index = value
        elif isinstance(value, str):
            match = re.search(r"[A-Za-z]", value)
            if match:
                index = ord(match.group(0).upper()) - ord("A")
        extracted = obj.get("reasoning")
        if isinstance(extracted, str) and extracted:
            reasoning = extracted
    if index is None:
        matches = _LETTER_FALLBACK_RE.findall(raw)
        if matches:
            index = ord(matches[-1].upper()) - ord("A")
    if index is None or not 0 <= index < n_options:
        return TrialResponse(raw=raw, answer_index=None, reasoning=reasoning, parse_valid=False)
    return TrialResponse(raw=raw, answer_index=index, reasoning=reasoning, parse_valid=True)
