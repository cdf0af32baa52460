"""Comment repair through a chat backend.

The backend can be any chat endpoint, including a self-hosted fine-tuned
model; the LoRA/KTO arithmetic of the fine-tuning recipe is in
:mod:`ccikit.alignment`.
"""

import logging
import time
from typing import List, Optional, Sequence

from ccikit.config import LlmEndpoint
from ccikit.detector import diff_tokens
from ccikit.errors import DataError, EmptyCompletionError
from ccikit.llm_gateway import ChatMessage, ChatRequest, LlmGateway, default_gateway
from ccikit.models import CciCase, FixResult
from ccikit.text_utils import first_comment_block

logger = logging.getLogger(__name__)

FIX_MAX_TOKENS = 256

SYSTEM_PROMPT = (
    "You update method comments after code changes. The old comment was written for the old "
    "version of a Java method and no longer matches the new version. Rewrite the comment so that "
    "it describes the new code correctly, changing as little as possible. Output only the "
    "corrected comment text, with no explanation and no code."
)


def build_fix_prompt(case: CciCase) -> List[ChatMessage]:
    for field in ("old_comment", "old_code", "new_code"):
        if not getattr(case, field, None):
            raise DataError(f"case {case.id} is missing {field}")
    script = diff_tokens(case.old_code, case.new_code).render()
    user = "\n".join(
        [
            f"Comment type: {case.comment_type}",
            f"Old comment:\n{case.old_comment}",
            f"Code edit script:\n{script}",
            f"New code:\n{case.new_code}",
            "",
            "Return only the corrected comment.",
        ]
    )
    return [ChatMessage(role="system", content=SYSTEM_PROMPT), ChatMessage(role="user", content=user)]


def clean_completion(text: str) -> str:
    """Strip fences and keep the first comment block, trimmed."""
    return first_comment_block(text or "").strip()


def fix_comment(
    backend: LlmEndpoint,
    case: CciCase,
    *,
    gateway: Optional[LlmGateway] = None,
    max_tokens: int = FIX_MAX_TOKENS,
) -> FixResult:
    messages = build_fix_prompt(case)
    gw = gateway or default_gateway()
    started = time.perf_counter()
    text = gw.chat_complete(backend, messages, temperature=0.0, max_tokens=max_tokens)
    comment = clean_completion(text)
    latency = time.perf_counter() - started
    if not comment:
        raise EmptyCompletionError(f"backend {backend.name} returned no comment for case {case.id}")
    logger.debug("fix-done id=%s backend=%s latency=%.3f", case.id, backend.name, latency)
    return FixResult(case_id=case.id, predicted_comment=comment, backend=backend.name, latency_s=latency)


def fix_batch(
    backend: LlmEndpoint,
    cases: Sequence[CciCase],
    *,
    gateway: Optional[LlmGateway] = None,
    max_in_flight: Optional[int] = None,
    max_tokens: int = FIX_MAX_TOKENS,
) -> List[FixResult]:
    """Order-stable fixes; a failed request yields a result with ``error`` set."""
    gw = gateway or default_gateway()
    requests = [ChatRequest(messages=build_fix_prompt(c), max_tokens=max_tokens) for c in cases]
    started = time.perf_counter()
    results = gw.chat_complete_batch(backend, requests, max_in_flight)
    # batch latency is shared out evenly; per-call latency is in the transcript
    each = (time.perf_counter() - started) / max(1, len(cases))
    out: List[FixResult] = []
    for case, result in zip(cases, results):
        comment = clean_completion(result.text) if result.ok else ""
        if result.ok and comment:
            out.append(FixResult(case_id=case.id, predicted_comment=comment, backend=backend.name, latency_s=each))
        else:
            error = result.error or "empty completion"
            logger.warning("fix-failed id=%s backend=%s error=%s", case.id, backend.name, error)
            out.append(FixResult(case_id=case.id, backend=backend.name, latency_s=each, error=error))
    logger.info("fix-batch-done cases=%d failed=%d", len(cases), sum(1 for r in out if r.error))
    return out
