"""Shared fixtures: case factories, stub gateways and small corpora."""

import threading
from typing import Callable, Dict, List, Optional

import orjson
import pytest

from ccikit.config import DetectorConfig, GatewayConfig, LlmEndpoint
from ccikit.errors import BackendError
from ccikit.models import CciCase, Corpus


# ============================================================================
# Case builders
# ============================================================================

def build_case(case_id: str, **overrides) -> CciCase:
    fields = {
        "id": case_id,
        "comment_type": "return",
        "old_comment": "@return the current count",
        "new_comment": "@return the current count",
        "old_code": "public int count() {\n    return count;\n}",
        "new_code": "public int count() {\n    return count + 1;\n}",
        "label": 0,
    }
    fields.update(overrides)
    return CciCase(**fields)


def write_jsonl(path, records) -> str:
    with open(path, "wb") as fh:
        for rec in records:
            if isinstance(rec, CciCase):
                rec = rec.to_json_dict()
            fh.write(orjson.dumps(rec) + b"\n")
    return str(path)


@pytest.fixture
def make_case() -> Callable[..., CciCase]:
    return build_case


@pytest.fixture
def toy_corpus() -> Corpus:
    """Separable toy data: inconsistent cases change the return type, consistent ones only reformat."""
    cases: List[CciCase] = []
    for i in range(6):
        cases.append(
            build_case(
                f"pos-{i}",
                old_comment=f"@return the DBObject for item{i}",
                new_comment=f"@return the Document for item{i}",
                old_code=f"public DBObject find{i}(String key) {{\n    return store.get(key);\n}}",
                new_code=f"public Document find{i}(String key) {{\n    return store.get(key);\n}}",
                label=1,
                split="train",
            )
        )
        cases.append(
            build_case(
                f"neg-{i}",
                old_comment=f"@return the size of bucket{i}",
                new_comment=f"@return the size of bucket{i}",
                old_code=f"public int size{i}() {{\n    return items.size();\n}}",
                new_code=f"public int size{i}() {{\n    int n = items.size();\n    return n;\n}}",
                label=0,
                split="train",
            )
        )
    return Corpus(cases=cases)


@pytest.fixture
def tiny_detector_config() -> DetectorConfig:
    return DetectorConfig(embed_dim=8, gru_hidden=6, attention_heads=2, epochs=1, batch_size=4, vocab_size=200, seed=7)


# ============================================================================
# Stub gateway
# ============================================================================

class StubGateway:
    """Deterministic stand-in for LlmGateway.

    ``responder(endpoint, messages)`` returns the completion text or raises.
    Every call is recorded in ``calls``.
    """

    def __init__(self, responder: Callable[[LlmEndpoint, list], str]) -> None:
        self.responder = responder
        self.calls: List[Dict] = []
        self._lock = threading.Lock()

    def chat_complete(self, endpoint, messages, temperature: float = 0.0, max_tokens: int = 256) -> str:
        with self._lock:
            self.calls.append({"endpoint": endpoint.name, "messages": list(messages), "max_tokens": max_tokens})
        return self.responder(endpoint, list(messages))

    def chat_complete_batch(self, endpoint, requests, max_in_flight: Optional[int] = None):
        from ccikit.llm_gateway import BatchResult

        results = []
        for i, req in enumerate(requests):
            try:
                results.append(BatchResult(index=i, text=self.chat_complete(endpoint, req.messages, req.temperature, req.max_tokens)))
            except BackendError as exc:
                results.append(BatchResult(index=i, error=str(exc), error_type=type(exc).__name__))
        return results


@pytest.fixture
def stub_gateway_factory() -> Callable[[Callable], StubGateway]:
    return StubGateway


@pytest.fixture
def endpoint() -> LlmEndpoint:
    return LlmEndpoint(name="stub", base_url="http://llm.test/v1", model_id="stub-model", max_retries=3)


@pytest.fixture
def gateway_config(tmp_path) -> GatewayConfig:
    return GatewayConfig(transcript_path=str(tmp_path / "transcript.jsonl"))
