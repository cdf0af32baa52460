"""Chat-completion client shared by the voters, the synthesis teacher and the fixer.

Three providers sit behind one call:

- ``openai``: POST ``{base_url}/chat/completions`` over httpx
- ``bedrock``: Anthropic models via ``bedrock-runtime.invoke_model``
- ``replay``: answers only from a replay file; a miss is an error

Any endpoint with ``replay_path`` set is answered from that file first. Every
attempt, replayed or live, appends one line to the transcript.
"""

import hashlib
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Callable, Dict, List, Literal, Optional, Sequence

import boto3
import httpx
import orjson
from botocore.exceptions import BotoCoreError, ClientError
from pydantic import BaseModel, Field, field_validator

from ccikit.config import GatewayConfig, LlmEndpoint
from ccikit.errors import (
    BackendError,
    ConfigError,
    EmptyCompletionError,
    HttpStatusError,
    ReplayMissError,
    RetryExhaustedError,
)
from ccikit.file_writer import TranscriptWriter

logger = logging.getLogger(__name__)

_RETRYABLE_BEDROCK_CODES = ("ThrottlingException", "ServiceUnavailableException", "TooManyRequestsException")


class ChatMessage(BaseModel):
    role: Literal["system", "user", "assistant"]
    content: str

    @field_validator("content")
    @classmethod
    def ensure_content(cls, v: str) -> str:
        if not v or not v.strip():
            raise ValueError("message content must be nonempty")
        return v


class ChatRequest(BaseModel):
    messages: List[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = Field(default=256, gt=0)


class BatchResult(BaseModel):
    index: int
    text: Optional[str] = None
    error: Optional[str] = None
    error_type: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class _RetryableFailure(Exception):
    """Internal marker: the attempt failed in a way worth retrying."""


def request_key(endpoint: LlmEndpoint, messages: Sequence[ChatMessage], temperature: float, max_tokens: int) -> str:
    """Stable replay key: sha256 over the endpoint name and the canonical request body.

    Two endpoints sharing a model id still get separate keys, so one replay
    file can hold every voter's answers.
    """
    body = {
        "endpoint": endpoint.name,
        "model": endpoint.model_id,
        "messages": [m.model_dump() for m in messages],
        "temperature": temperature,
        "max_tokens": max_tokens,
    }
    return hashlib.sha256(orjson.dumps(body, option=orjson.OPT_SORT_KEYS)).hexdigest()


class ReplayStore:
    """JSON Lines file of ``{"key", "completion"}`` records, loaded lazily."""

    def __init__(self, path: str) -> None:
        self.path = path
        self._entries: Optional[Dict[str, str]] = None
        self._lock = threading.Lock()

    def _load(self) -> Dict[str, str]:
        if self._entries is None:
            entries: Dict[str, str] = {}
            try:
                with open(self.path, "rb") as fh:
                    for raw in fh:
                        if raw.strip():
                            rec = orjson.loads(raw)
                            entries[rec["key"]] = rec["completion"]
            except FileNotFoundError:
                logger.warning("replay-file-missing path=%s", self.path)
            self._entries = entries
        return self._entries

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            return self._load().get(key)

    def record(self, key: str, completion: str, endpoint: str) -> None:
        with self._lock:
            entries = self._load()
            if key in entries:
                return
            entries[key] = completion
            with open(self.path, "ab") as fh:
                fh.write(orjson.dumps({"key": key, "completion": completion, "endpoint": endpoint}) + b"\n")


class LlmGateway:
    """Shareable client; safe to call from several threads at once."""

    def __init__(
        self,
        config: Optional[GatewayConfig] = None,
        *,
        http_client: Optional[httpx.Client] = None,
        bedrock_client_factory: Optional[Callable[[Optional[str]], object]] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config or GatewayConfig()
        self.transcript = TranscriptWriter(self.config.transcript_path)
        self._http = http_client
        self._owns_http = http_client is None
        self._bedrock_factory = bedrock_client_factory or (lambda region: boto3.client("bedrock-runtime", region_name=region))
        self._bedrock_clients: Dict[Optional[str], object] = {}
        self._sleep = sleep
        self._replays: Dict[str, ReplayStore] = {}
        self._lock = threading.Lock()

    def _replay(self, path: str) -> ReplayStore:
        with self._lock:
            if path not in self._replays:
                self._replays[path] = ReplayStore(path)
            return self._replays[path]

    def _http_client(self) -> httpx.Client:
        with self._lock:
            if self._http is None:
                self._http = httpx.Client()
            return self._http

    def _bedrock(self, region: Optional[str]):
        with self._lock:
            if region not in self._bedrock_clients:
                self._bedrock_clients[region] = self._bedrock_factory(region)
            return self._bedrock_clients[region]

    def close(self) -> None:
        if self._owns_http and self._http is not None:
            self._http.close()
            self._http = None

    def __enter__(self) -> "LlmGateway":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def _log_attempt(self, endpoint: LlmEndpoint, key: str, attempt: int, started: float, outcome: str, **extra) -> None:
        entry = {
            "time": datetime.now(timezone.utc).isoformat(),
            "endpoint": endpoint.name,
            "model": endpoint.model_id,
            "key": key,
            "attempt": attempt,
            "latency_s": round(time.perf_counter() - started, 6),
            "outcome": outcome,
        }
        entry.update(extra)
        self.transcript.append(entry)

    def _send_openai(self, endpoint: LlmEndpoint, messages: Sequence[ChatMessage], temperature: float, max_tokens: int) -> str:
        headers = {"Content-Type": "application/json"}
        key = endpoint.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": endpoint.model_id,
            "messages": [m.model_dump() for m in messages],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._http_client().post(url, content=orjson.dumps(body), headers=headers, timeout=endpoint.timeout)
        except httpx.TransportError as exc:
            raise _RetryableFailure(f"transport: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _RetryableFailure(f"HTTP {resp.status_code}")
        if resp.status_code >= 300:
            raise HttpStatusError(endpoint.name, resp.status_code, resp.text)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"endpoint={endpoint.name} returned an unexpected body: {exc}") from exc

    def _send_bedrock(self, endpoint: LlmEndpoint, messages: Sequence[ChatMessage], temperature: float, max_tokens: int) -> str:
        system = "\n\n".join(m.content for m in messages if m.role == "system")
        payload = {
            "anthropic_version": "bedrock-2023-05-31",
            "max_tokens": max_tokens,
            "temperature": temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages if m.role != "system"],
        }
        if system:
            payload["system"] = system
        try:
            response = self._bedrock(endpoint.region_name).invoke_model(modelId=endpoint.model_id, body=orjson.dumps(payload))
        except ClientError as exc:
            code = exc.response.get("Error", {}).get("Code", "Unknown")
            if code in _RETRYABLE_BEDROCK_CODES:
                raise _RetryableFailure(f"bedrock {code}") from exc
            raise BackendError(f"endpoint={endpoint.name} bedrock error {code}: {exc}") from exc
        except BotoCoreError as exc:
            raise _RetryableFailure(f"bedrock transport: {exc}") from exc
        try:
            body = orjson.loads(response["body"].read())
            return "".join(part.get("text", "") for part in body["content"] if part.get("type", "text") == "text")
        except (orjson.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
            raise BackendError(f"endpoint={endpoint.name} returned an unexpected body: {exc!r}") from exc

    def chat_complete(
        self,
        endpoint: LlmEndpoint,
        messages: Sequence[ChatMessage],
        temperature: float = 0.0,
        max_tokens: int = 256,
    ) -> str:
        """Return the first completion's text.

        Retries transport errors, HTTP 429 and 5xx with exponential backoff
        (1s, 2s, 4s, ...); other non-2xx statuses and empty completions fail
        immediately.
        """
        key = request_key(endpoint, messages, temperature, max_tokens)

        if endpoint.replay_path:
            started = time.perf_counter()
            cached = self._replay(endpoint.replay_path).get(key)
            if cached is not None:
                self._log_attempt(endpoint, key, 1, started, "replay", completion=cached)
                return cached
            if endpoint.provider == "replay":
                self._log_attempt(endpoint, key, 1, started, "replay-miss")
                raise ReplayMissError(f"endpoint={endpoint.name} has no replay entry for key {key[:12]}")
        elif endpoint.provider == "replay":
            raise ReplayMissError(f"endpoint={endpoint.name} is provider=replay but has no replay_path")

        send = self._send_bedrock if endpoint.provider == "bedrock" else self._send_openai
        attempts = 1 + endpoint.max_retries
        last_error: Optional[BaseException] = None
        for attempt in range(attempts):
            started = time.perf_counter()
            try:
                text = send(endpoint, messages, temperature, max_tokens)
            except _RetryableFailure as exc:
                last_error = exc
                self._log_attempt(endpoint, key, attempt + 1, started, "retryable-error", error=str(exc))
                if attempt == attempts - 1:
                    break
                wait_time = 2**attempt
                logger.warning(
                    "llm-retry endpoint=%s attempt=%d retrying_in=%ds error=%s",
                    endpoint.name,
                    attempt + 1,
                    wait_time,
                    exc,
                )
                self._sleep(wait_time)
                continue
            except BackendError as exc:
                self._log_attempt(endpoint, key, attempt + 1, started, "error", error=str(exc))
                raise

            if not text or not text.strip():
                self._log_attempt(endpoint, key, attempt + 1, started, "empty")
                raise EmptyCompletionError(f"endpoint={endpoint.name} returned an empty completion")

            self._log_attempt(endpoint, key, attempt + 1, started, "ok", completion=text)
            if self.config.record_replay_to:
                self._replay(self.config.record_replay_to).record(key, text, endpoint.name)
            logger.debug("llm-complete endpoint=%s attempt=%d chars=%d", endpoint.name, attempt + 1, len(text))
            return text

        raise RetryExhaustedError(endpoint.name, attempts, last_error)

    def chat_complete_batch(
        self,
        endpoint: LlmEndpoint,
        requests: Sequence[ChatRequest],
        max_in_flight: Optional[int] = None,
    ) -> List[BatchResult]:
        """Run requests with at most ``max_in_flight`` pending; results keep request order."""
        workers = max_in_flight if max_in_flight is not None else self.config.max_in_flight
        if workers < 1:
            raise ConfigError(f"max_in_flight must be >= 1, got {workers}")
        if not requests:
            return []

        def run_one(index: int, req: ChatRequest) -> BatchResult:
            try:
                text = self.chat_complete(endpoint, req.messages, req.temperature, req.max_tokens)
                return BatchResult(index=index, text=text)
            except Exception as exc:
                logger.warning("llm-batch-item-failed endpoint=%s index=%d error=%s", endpoint.name, index, exc)
                return BatchResult(index=index, error=str(exc), error_type=type(exc).__name__)

        slots: List[Optional[BatchResult]] = [None] * len(requests)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_one, i, req): i for i, req in enumerate(requests)}
            for future, index in futures.items():
                slots[index] = future.result()
        return [slot for slot in slots if slot is not None]


_default_gateway: Optional[LlmGateway] = None


def default_gateway() -> LlmGateway:
    global _default_gateway
    if _default_gateway is None:
        _default_gateway = LlmGateway()
    return _default_gateway


def chat_complete(
    endpoint: LlmEndpoint,
    messages: Sequence[ChatMessage],
    temperature: float = 0.0,
    max_tokens: int = 256,
    *,
    gateway: Optional[LlmGateway] = None,
) -> str:
    return (gateway or default_gateway()).chat_complete(endpoint, messages, temperature, max_tokens)


def chat_complete_batch(
    endpoint: LlmEndpoint,
    requests: Sequence[ChatRequest],
    max_in_flight: int = 4,
    *,
    gateway: Optional[LlmGateway] = None,
) -> List[BatchResult]:
    return (gateway or default_gateway()).chat_complete_batch(endpoint, requests, max_in_flight)
