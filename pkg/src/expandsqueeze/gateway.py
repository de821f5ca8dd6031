"""LLM access: stop-sequence generation over OpenAI-compatible HTTP, plus scripted test backends."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import httpx
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from .core import WHITESPACE, Tokenizer

log = logging.getLogger(__name__)

STOP = "stop_sequence"
LENGTH = "length"
EOS = "eos"


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int | None, body: str):
        super().__init__(f"provider error {status}: {body[:500]}")
        self.status = status
        self.body = body


class BudgetExceeded(GatewayError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    stop_sequences: tuple[str, ...] = ()
    max_tokens: int = 500
    temperature: float = 1.0
    model: str = ""
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    stop_reason: str  # STOP, LENGTH or EOS
    stop_sequence: str | None = None
    latency_ms: int = 0


class LLMGateway(Protocol):
    label: str

    def generate(self, req: GenerationRequest) -> GenerationResult: ...


def cut_at_stop(text: str, stops: Iterable[str]) -> tuple[str, str | None]:
    """Truncate ``text`` right after the earliest stop sequence it contains."""
    best: tuple[int, str] | None = None
    for s in stops:
        if not s:
            continue
        i = text.find(s)
        if i >= 0 and (best is None or i < best[0]):
            best = (i, s)
    if best is None:
        return text, None
    i, s = best
    return text[: i + len(s)], s


def _finish_local(text: str, req: GenerationRequest, tokenizer: Tokenizer, t0: float) -> GenerationResult:
    text, hit = cut_at_stop(text, req.stop_sequences)
    latency = int((time.perf_counter() - t0) * 1000)
    if hit is not None and tokenizer.count(text) <= req.max_tokens:
        return GenerationResult(text, STOP, hit, latency)
    if tokenizer.count(text) > req.max_tokens:
        return GenerationResult(tokenizer.truncate(text, req.max_tokens), LENGTH, None, latency)
    return GenerationResult(text, EOS, None, latency)


class ScriptedGateway:
    """Replays canned generations in order and records every prompt it receives.

    Stop sequences and the token budget are applied to the canned text exactly
    as a real provider would.
    """

    def __init__(self, script: Sequence[str], label: str = "scripted", tokenizer: Tokenizer = WHITESPACE):
        self._script = list(script)
        self._pos = 0
        self._lock = threading.Lock()
        self.label = label
        self.tokenizer = tokenizer
        self.prompts: list[str] = []
        self.requests: list[GenerationRequest] = []

    @property
    def remaining(self) -> int:
        return len(self._script) - self._pos

    def generate(self, req: GenerationRequest) -> GenerationResult:
        t0 = time.perf_counter()
        with self._lock:
            self.prompts.append(req.prompt)
            self.requests.append(req)
            if self._pos >= len(self._script):
                raise ProviderError(None, "script exhausted")
            text = self._script[self._pos]
            self._pos += 1
        return _finish_local(text, req, self.tokenizer, t0)


class CallableGateway:
    """Backend driven by a plain function of the prompt (rule-based oracles, fault injection)."""

    def __init__(self, fn: Callable[[str], str], label: str = "callable", tokenizer: Tokenizer = WHITESPACE):
        self.fn = fn
        self.label = label
        self.tokenizer = tokenizer

    def generate(self, req: GenerationRequest) -> GenerationResult:
        t0 = time.perf_counter()
        return _finish_local(self.fn(req.prompt), req, self.tokenizer, t0)


class _Retryable(Exception):
    def __init__(self, cause: Exception, status: int | None = None, body: str = ""):
        super().__init__(str(cause))
        self.cause = cause
        self.status = status
        self.body = body


def _redact(headers: dict[str, str]) -> dict[str, str]:
    return {k: ("***" if k.lower() in ("authorization", "api-key", "x-api-key") else v) for k, v in headers.items()}


class OpenAIGateway:
    """OpenAI-compatible client for /chat/completions or /completions.

    ``api_key`` falls back to the environment variable named by ``api_key_env``.
    Transport failures and 429/5xx responses are retried with exponential
    backoff; other 4xx responses fail immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        endpoint: str = "chat",
        max_retries: int = 3,
        backoff_s: float = 1.0,
        max_calls: int | None = None,
        max_in_flight: int = 16,
        timeout: float = 120.0,
        trace: bool = False,
        client: httpx.Client | None = None,
        label: str | None = None,
    ):
        if endpoint not in ("chat", "completions"):
            raise ValueError(f"endpoint must be 'chat' or 'completions', got {endpoint!r}")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.max_calls = max_calls
        self.trace = trace
        self.label = label or model
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._calls = 0
        self._count_lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def _payload(self, req: GenerationRequest) -> dict:
        body: dict = {
            "model": req.model or self.model,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.stop_sequences:
            body["stop"] = list(req.stop_sequences)
        if req.seed is not None:
            body["seed"] = req.seed
        if self.endpoint == "chat":
            body["messages"] = [{"role": "user", "content": req.prompt}]
        else:
            body["prompt"] = req.prompt
        return body

    def _post(self, url: str, headers: dict, body: dict) -> dict:
        try:
            resp = self._client.post(url, headers=headers, json=body)
        except httpx.TransportError as exc:
            raise _Retryable(exc) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Retryable(RuntimeError(f"HTTP {resp.status_code}"), resp.status_code, resp.text)
        if resp.status_code >= 400:
            raise ProviderError(resp.status_code, resp.text)
        try:
            return resp.json()
        except ValueError:
            raise ProviderError(resp.status_code, f"non-JSON response: {resp.text}") from None

    def generate(self, req: GenerationRequest) -> GenerationResult:
        with self._count_lock:
            if self.max_calls is not None and self._calls >= self.max_calls:
                raise BudgetExceeded(f"{self.label}: call cap {self.max_calls} reached")
            self._calls += 1

        url = f"{self.base_url}/{'chat/completions' if self.endpoint == 'chat' else 'completions'}"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = self._payload(req)
        if self.trace:
            log.debug("POST %s headers=%s body=%s", url, _redact(headers), json.dumps(body)[:4000])

        t0 = time.perf_counter()
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_exponential(multiplier=self.backoff_s, max=30),
            retry=retry_if_exception_type(_Retryable),
            reraise=True,
        )
        with self._slots:
            try:
                data = retrying(self._post, url, headers, body)
            except _Retryable as exc:
                if exc.status is not None:
                    raise ProviderError(exc.status, exc.body) from exc.cause
                raise TransportError(f"{self.label}: {exc.cause}") from exc.cause
        latency = int((time.perf_counter() - t0) * 1000)
        if self.trace:
            log.debug("response from %s: %s", url, json.dumps(data)[:4000])
        return self._to_result(data, req, latency)

    def _to_result(self, data: dict, req: GenerationRequest, latency: int) -> GenerationResult:
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] if self.endpoint == "chat" else choice["text"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(None, f"unexpected response shape: {json.dumps(data)[:500]}") from None
        text = text or ""
        finish = choice.get("finish_reason")

        # providers strip the matched stop string; restore it so callers see the closing tag
        text, hit = cut_at_stop(text, req.stop_sequences)
        if hit is None and finish == "stop":
            hit = _infer_stop(text, choice.get("stop_reason"), req.stop_sequences)
            if hit is not None:
                text += hit
        if hit is not None:
            return GenerationResult(text, STOP, hit, latency)
        if finish == "length":
            return GenerationResult(text, LENGTH, None, latency)
        return GenerationResult(text, EOS, None, latency)


def _infer_stop(text: str, reported: object, stops: Sequence[str]) -> str | None:
    if isinstance(reported, str) and reported in stops:
        return reported
    # </x> fired if the text ends inside an open <x> block
    best: tuple[int, str] | None = None
    for s in stops:
        if s.startswith("</") and s.endswith(">"):
            opener = "<" + s[2:]
            at = text.rfind(opener)
            if at >= 0 and text.rfind(s) < at and (best is None or at > best[0]):
                best = (at, s)
    return best[1] if best else None
