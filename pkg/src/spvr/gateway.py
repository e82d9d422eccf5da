"""Chat-completion dispatch with a disk cache and a scripted mock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .errors import AuthError, ConfigError, EndpointError, UnmatchedPrompt

log = logging.getLogger(__name__)

__all__ = [
    "ChatAdapter",
    "CompletionRecord",
    "Gateway",
    "HttpChatAdapter",
    "MockAdapter",
    "ModelConfig",
    "cache_key",
    "mock_adapter",
]

DEFAULT_KEY_ENV = "SPVR_API_KEY"


@dataclass(frozen=True)
class ModelConfig:
    endpoint_url: str = "mock://"
    model_name: str = "mock"
    samples_per_prompt: int = 3
    temperature: float = 0.5
    top_k: int | None = 50
    top_p: float | None = 0.95
    max_retries: int = 3
    timeout: float = 60.0
    concurrency: int = 4
    backoff: float = 1.0
    api_key_env: str = DEFAULT_KEY_ENV

    def __post_init__(self) -> None:
        if self.samples_per_prompt < 1:
            raise ConfigError("samples_per_prompt must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.top_p is not None and not 0 < self.top_p <= 1:
            raise ConfigError("top_p must lie in (0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.max_retries < 0 or self.concurrency < 1:
            raise ConfigError("max_retries must be >= 0 and concurrency >= 1")

    @property
    def k(self) -> int:
        return self.samples_per_prompt

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown model settings: {sorted(extra)}")
        return cls(**data)


@dataclass(frozen=True)
class CompletionRecord:
    sample_id: str
    ordinal: int
    attempt: int
    raw_text: str
    latency_ms: float = 0.0
    cached: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class ChatAdapter(Protocol):
    def __call__(self, prompt: str, attempt: int, cfg: ModelConfig) -> str: ...


# --------------------------------------------------------------------------
# adapters


class MockAdapter:
    """Scripted replies: first pattern that matches the prompt wins.

    Patterns are regular expressions searched in the prompt. Attempt ``a``
    returns reply ``(a - 1) % len(replies)``.
    """

    def __init__(self, script: Mapping[str, Sequence[str] | str] | Sequence[tuple[str, Sequence[str] | str]] = ()):
        items = script.items() if isinstance(script, Mapping) else script
        self.script = [
            (re.compile(p, re.DOTALL), [r] if isinstance(r, str) else list(r)) for p, r in items
        ]
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, prompt: str, attempt: int, cfg: ModelConfig | None = None) -> str:
        with self._lock:
            self.calls += 1
        for pattern, replies in self.script:
            if replies and pattern.search(prompt):
                return replies[(attempt - 1) % len(replies)]
        raise UnmatchedPrompt(prompt[:80])


def mock_adapter(script: Mapping[str, Sequence[str] | str]) -> MockAdapter:
    return MockAdapter(script)


class HttpChatAdapter:
    """OpenAI-style ``/chat/completions`` client over HTTPS."""

    def __init__(self, session=None, sleep: Callable[[float], None] = time.sleep):
        import requests

        self._requests = requests
        self.session = session or requests.Session()
        self.sleep = sleep

    def _payload(self, prompt: str, cfg: ModelConfig) -> dict:
        body = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        }
        if cfg.top_p is not None:
            body["top_p"] = cfg.top_p
        if cfg.top_k is not None:
            body["top_k"] = cfg.top_k
        return body

    def __call__(self, prompt: str, attempt: int, cfg: ModelConfig) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last: Exception | None = None
        for tries in range(cfg.max_retries + 1):
            if tries:
                self.sleep(cfg.backoff * 2 ** (tries - 1))
            try:
                resp = self.session.post(
                    cfg.endpoint_url, json=self._payload(prompt, cfg), headers=headers, timeout=cfg.timeout
                )
            except self._requests.RequestException as exc:
                last = exc
                log.warning("request failed (try %d): %s", tries + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = EndpointError(f"HTTP {resp.status_code}")
                log.warning("transient HTTP %d (try %d)", resp.status_code, tries + 1)
                continue
            if resp.status_code >= 400:
                raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EndpointError(f"unexpected response shape: {exc}") from exc
        raise EndpointError(f"gave up after {cfg.max_retries + 1} tries: {last}")


# --------------------------------------------------------------------------
# gateway


def cache_key(model_name: str, prompt: str, attempt: int) -> str:
    blob = json.dumps([model_name, prompt, attempt], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class Gateway:
    cfg: ModelConfig
    adapter: ChatAdapter
    cache_dir: Path | None = None
    network_calls: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._inflight = threading.BoundedSemaphore(self.cfg.concurrency)
        self.max_inflight = 0
        self._now = 0

    def _cache_path(self, key: str) -> Path | None:
        return None if self.cache_dir is None else self.cache_dir / key[:2] / f"{key}.json"

    def _one(self, prompt: str, attempt: int) -> tuple[str, float, bool]:
        key = cache_key(self.cfg.model_name, prompt, attempt)
        path = self._cache_path(key)
        if path is not None and path.exists():
            entry = json.loads(path.read_text("utf-8"))
            return entry["raw_text"], entry["latency_ms"], True
        with self._inflight:
            with self._lock:
                self.network_calls += 1
                self._now += 1
                self.max_inflight = max(self.max_inflight, self._now)
            t0 = time.perf_counter()
            try:
                text = self.adapter(prompt, attempt, self.cfg)
            finally:
                with self._lock:
                    self._now -= 1
            # latency is rounded so cached and fresh records serialize alike
            latency = round((time.perf_counter() - t0) * 1000, 1)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"model": self.cfg.model_name, "attempt": attempt,
                                       "raw_text": text, "latency_ms": latency}), "utf-8")
            tmp.replace(path)
        return text, latency, False

    def complete(self, prompt: str, sample_id: str = "", ordinal: int = 1) -> list[CompletionRecord]:
        """k completions for one prompt."""
        return self.complete_many([(sample_id, ordinal, prompt)])

    def complete_many(self, jobs: Sequence[tuple[str, int, str]]) -> list[CompletionRecord]:
        """Complete ``(sample_id, ordinal, prompt)`` jobs; output order follows input order."""
        tasks = [(sid, ordn, prompt, a) for sid, ordn, prompt in jobs for a in range(1, self.cfg.k + 1)]
        if self.cfg.concurrency == 1 or len(tasks) <= 1:
            results = [self._one(p, a) for _, _, p, a in tasks]
        else:
            with ThreadPoolExecutor(max_workers=self.cfg.concurrency) as pool:
                results = list(pool.map(lambda t: self._one(t[2], t[3]), tasks))
        return [
            CompletionRecord(sid, ordn, a, text, latency, cached)
            for (sid, ordn, _, a), (text, latency, cached) in zip(tasks, results)
        ]
