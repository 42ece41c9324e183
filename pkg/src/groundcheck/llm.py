"""Chat-completions client: retries, in-flight limits, disk cache, scripted mock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

logger = logging.getLogger(__name__)

Message = Mapping[str, str]


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 1.0
    jitter: float = 0.1


@dataclass(frozen=True)
class BackendProfile:
    name: str
    model_id: str
    base_address: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 1024
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 60.0
    # Name of the environment variable holding the bearer token.
    auth_env: str | None = None

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry.max_attempts < 1:
            raise ValueError("retry.max_attempts must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")

    @property
    def api_key_env(self) -> str:
        if self.auth_env:
            return self.auth_env
        return re.sub(r"[^A-Za-z0-9]", "_", self.name).upper() + "_API_KEY"

    @classmethod
    def from_dict(cls, name: str, data: Mapping[str, Any]) -> "BackendProfile":
        data = dict(data)
        retry = RetryPolicy(**data.pop("retry", {}))
        known = {f for f in cls.__dataclass_fields__} - {"name", "retry"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"backend {name!r}: unknown fields {sorted(unknown)}")
        return cls(name=name, retry=retry, **data)


class BackendError(Exception):
    pass


class TransientBackendError(BackendError):
    """Timeouts, throttling, 5xx: worth retrying."""


class PermanentBackendError(BackendError):
    """Auth failures and malformed requests: retrying cannot help."""


class ExhaustedRetriesError(BackendError):
    def __init__(self, attempts: int, last: Exception):
        self.attempts = attempts
        self.last = last
        super().__init__(f"gave up after {attempts} attempts: {last}")


class ScriptExhaustedError(AssertionError):
    """A mock backend was called more times than its script allows."""


@dataclass(frozen=True)
class Completion:
    text: str
    usage: dict[str, int] = field(default_factory=dict)
    attempts: int = 1
    cached: bool = False


class Transport(Protocol):
    def send(self, profile: BackendProfile, messages: Sequence[Message]) -> tuple[str, dict]: ...


def _canonical_messages(messages: Sequence[Message]) -> list[dict[str, str]]:
    return [{"role": m["role"], "content": m["content"]} for m in messages]


def cache_key(profile: BackendProfile, messages: Sequence[Message], template_version: str = "") -> str:
    payload = json.dumps(
        {
            "model_id": profile.model_id,
            "messages": _canonical_messages(messages),
            "temperature": profile.temperature,
            "max_output_tokens": profile.max_output_tokens,
            "template_version": template_version,
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class DiskCache:
    """Content-addressed response store: ``<root>/<first 2 hex>/<digest>``."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._inflight: dict[str, Future] = {}

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / key

    def get(self, key: str) -> Completion | None:
        path = self.path_for(key)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        try:
            data = json.loads(raw)
            return Completion(text=data["text"], usage=data.get("usage", {}), cached=True)
        except (ValueError, KeyError, TypeError):
            logger.warning("corrupt cache entry %s, treating as miss", path)
            return None

    def put(self, key: str, completion: Completion) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = json.dumps({"text": completion.text, "usage": completion.usage}, ensure_ascii=False)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(body)
        os.replace(tmp, path)

    def single_flight(self, key: str, compute: Callable[[], Completion]) -> Completion:
        """Return the cached value or compute it once, sharing one call among concurrent callers."""
        with self._lock:
            hit = self.get(key)
            if hit is not None:
                return hit
            fut = self._inflight.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._inflight[key] = fut
        if not owner:
            result = fut.result()
            return replace(result, cached=True)
        try:
            result = compute()
            self.put(key, result)
            fut.set_result(result)
            return result
        except BaseException as exc:
            fut.set_exception(exc)
            raise
        finally:
            with self._lock:
                self._inflight.pop(key, None)


class HttpTransport:
    """POST ``<base_address>/chat/completions`` in the common chat-completions shape."""

    def __init__(self, client: Any = None):
        import httpx

        self._httpx = httpx
        self._client = client or httpx.Client()

    def send(self, profile: BackendProfile, messages: Sequence[Message]) -> tuple[str, dict]:
        httpx = self._httpx
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(profile.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": profile.model_id,
            "messages": _canonical_messages(messages),
            "temperature": profile.temperature,
            "max_tokens": profile.max_output_tokens,
        }
        url = profile.base_address.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, json=body, headers=headers, timeout=profile.timeout)
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport error: {exc}") from exc
        status = resp.status_code
        if status == 429 or status == 408 or status >= 500:
            raise TransientBackendError(f"HTTP {status}: {resp.text[:200]}")
        if status >= 400:
            raise PermanentBackendError(f"HTTP {status}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise PermanentBackendError(f"unexpected response shape: {exc}") from exc
        return text or "", data.get("usage") or {}


_FAILURES = {
    "throttle": TransientBackendError,
    "timeout": TransientBackendError,
    "server": TransientBackendError,
    "auth": PermanentBackendError,
    "bad_request": PermanentBackendError,
}


@dataclass
class RequestRecord:
    messages: list[dict[str, str]]
    start: float
    end: float = 0.0
    outcome: str = ""


class MockBackend:
    """Scripted transport for tests.

    Each script entry is a dict with one of ``respond`` (text) or ``fail``
    (``throttle``, ``timeout``, ``server``, ``auth``, ``bad_request``), and an
    optional ``delay`` in seconds applied before answering. Entries are
    consumed one per call. Alternatively pass ``responder``, a function of the
    message list, for order-independent scripting.
    """

    def __init__(
        self,
        script: Sequence[Mapping[str, Any]] | None = None,
        responder: Callable[[list[dict[str, str]]], str] | None = None,
    ):
        if script is None and responder is None:
            raise ValueError("MockBackend needs a script or a responder")
        if script is not None and len(script) == 0:
            raise ValueError("mock script must be non-empty")
        self._script = list(script or [])
        self._responder = responder
        self._pos = 0
        self._lock = threading.Lock()
        self.log: list[RequestRecord] = []
        self.in_flight = 0
        self.peak_in_flight = 0

    @property
    def calls(self) -> int:
        return len(self.log)

    def send(self, profile: BackendProfile, messages: Sequence[Message]) -> tuple[str, dict]:
        msgs = _canonical_messages(messages)
        with self._lock:
            record = RequestRecord(messages=msgs, start=time.monotonic())
            self.log.append(record)
            if self._responder is None:
                if self._pos >= len(self._script):
                    record.outcome = "exhausted"
                    record.end = record.start
                    raise ScriptExhaustedError(
                        f"mock script exhausted after {len(self._script)} entries"
                    )
                entry = self._script[self._pos]
                self._pos += 1
            else:
                entry = None
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if entry is None:
                text = self._responder(msgs)
                record.outcome = "respond"
                return text, {}
            if entry.get("delay"):
                time.sleep(float(entry["delay"]))
            if "fail" in entry:
                kind = entry["fail"]
                record.outcome = f"fail:{kind}"
                raise _FAILURES[kind](f"scripted {kind} failure")
            record.outcome = "respond"
            return entry.get("respond", ""), {}
        finally:
            with self._lock:
                self.in_flight -= 1
                record.end = time.monotonic()


class ChatClient:
    """Profile-bound client: retry with exponential backoff, in-flight bound, optional cache."""

    def __init__(
        self,
        profile: BackendProfile,
        transport: Transport | None = None,
        cache: DiskCache | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.profile = profile
        self.transport = transport if transport is not None else HttpTransport()
        self.cache = cache
        self._sleep = sleep
        self._rng = rng or random.Random(0)
        self._slots = threading.BoundedSemaphore(profile.max_in_flight)

    @classmethod
    def mock(cls, script=None, responder=None, **profile_fields: Any) -> "ChatClient":
        """Client over a fresh :class:`MockBackend`; backoff sleeps are skipped."""
        fields = {"name": "mock", "model_id": "mock-model"}
        fields.update(profile_fields)
        return cls(
            BackendProfile(**fields),
            transport=MockBackend(script=script, responder=responder),
            sleep=lambda _s: None,
        )

    def backoff(self, attempt: int) -> float:
        r = self.profile.retry
        spread = 1.0 + r.jitter * self._rng.uniform(-1.0, 1.0)
        return max(0.0, r.base_backoff * (2 ** (attempt - 1)) * spread)

    def complete(self, messages: Sequence[Message]) -> Completion:
        if not messages:
            raise ValueError("messages must be non-empty")
        max_attempts = self.profile.retry.max_attempts
        last: Exception | None = None
        for attempt in range(1, max_attempts + 1):
            try:
                with self._slots:
                    text, usage = self.transport.send(self.profile, messages)
                return Completion(text=text, usage=dict(usage), attempts=attempt)
            except TransientBackendError as exc:
                last = exc
                logger.debug("%s attempt %d failed: %s", self.profile.name, attempt, exc)
                if attempt < max_attempts:
                    self._sleep(self.backoff(attempt))
        raise ExhaustedRetriesError(max_attempts, last)

    def cached_complete(self, messages: Sequence[Message], template_version: str = "") -> Completion:
        if self.cache is None:
            return self.complete(messages)
        key = cache_key(self.profile, messages, template_version)
        return self.cache.single_flight(key, lambda: self.complete(messages))
