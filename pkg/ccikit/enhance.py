"""Iterative training-set enhancement from the detector's own mistakes.

Each round retrains the detector from the same initial model on the current
corpus, evaluates it on the original corpus, samples a fraction of the
original cases it got wrong, and asks a teacher LLM for similar cases.
Synthetic cases are never used as parents.
"""

import logging
import math
import random
from typing import Callable, List, Optional, Sequence, Set, Tuple

import orjson
from pydantic import BaseModel, Field, ValidationError

from ccikit.config import DetectorConfig, EnhanceConfig, LlmEndpoint
from ccikit.detector import DetectorModel, evaluate, train
from ccikit.errors import DataError
from ccikit.evalkit import ClassificationMetrics
from ccikit.llm_gateway import ChatMessage, ChatRequest, LlmGateway, default_gateway
from ccikit.models import CciCase, Corpus
from ccikit.text_utils import strip_code_fences

logger = logging.getLogger(__name__)

SYNTH_FIELDS = ("old_comment", "new_comment", "old_code", "new_code")

SYSTEM_PROMPT = (
    "You generate training data for a detector of outdated method comments. You are given one "
    "example of a Java method change: the comment written for the old method, the old code, the "
    "new code and the updated comment. Write new examples that keep the same concept and the same "
    "relationship between comment and code change, but vary identifiers, phrasing and code structure."
)


class IterationRecord(BaseModel):
    iteration: int
    corpus_size: int
    d0_metrics: ClassificationMetrics
    misclassified: int
    sampled_ids: List[str] = Field(default_factory=list)
    synthesized: int = 0
    stop_reason: Optional[str] = None


def sample_errors(misclassified: Sequence[str], corpus: Corpus, rate: float, seed: int) -> List[CciCase]:
    """Seeded sample of ceil(rate * eligible) misclassified original cases, at least one."""
    index = corpus.by_id()
    eligible = [index[i] for i in misclassified if i in index and not index[i].synthetic]
    if not eligible:
        return []
    k = min(len(eligible), max(1, math.ceil(rate * len(eligible))))
    picked = {c.id for c in random.Random(seed).sample(eligible, k)}
    return [c for c in eligible if c.id in picked]


def build_synthesis_prompt(case: CciCase, generations: int = 2) -> List[ChatMessage]:
    if case.label is None:
        raise DataError(f"case {case.id} is unlabeled; synthesis needs a gold label")
    if case.synthetic:
        raise DataError(f"case {case.id} is synthetic; only original cases seed synthesis")
    missing = [f for f in SYNTH_FIELDS if not getattr(case, f)]
    if missing:
        raise DataError(f"case {case.id} is missing {', '.join(missing)}")
    relation = (
        "The old comment is INCONSISTENT with the new code."
        if case.is_positive
        else "The old comment is still CONSISTENT with the new code."
    )
    user = "\n".join(
        [
            f"Comment type: {case.comment_type}",
            f"Old comment:\n{case.old_comment}",
            f"Old code:\n{case.old_code}",
            f"New code:\n{case.new_code}",
            f"New comment:\n{case.new_comment}",
            relation,
            "",
            f"Generate {generations} new examples with the same label. Keep the conceptual relationship "
            "but change identifiers, phrasing and structure.",
            "Respond with a JSON array only. Each element is an object with the string fields "
            '"old_comment", "new_comment", "old_code" and "new_code".',
        ]
    )
    return [ChatMessage(role="system", content=SYSTEM_PROMPT), ChatMessage(role="user", content=user)]


def _unique_id(base: str, taken: Set[str]) -> str:
    candidate, n = base, 1
    while candidate in taken:
        n += 1
        candidate = f"{base}.{n}"
    taken.add(candidate)
    return candidate


def parse_synthetic(completion: str, parent: CciCase, iteration: int, taken: Set[str], limit: int) -> List[CciCase]:
    """Schema-checked cases from one teacher reply; bad elements are dropped."""
    try:
        payload = orjson.loads(strip_code_fences(completion))
    except orjson.JSONDecodeError as exc:
        logger.warning("synth-unparseable parent=%s error=%s", parent.id, exc)
        return []
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        logger.warning("synth-not-a-list parent=%s", parent.id)
        return []
    cases: List[CciCase] = []
    for j, item in enumerate(payload[:limit]):
        if not isinstance(item, dict):
            logger.warning("synth-item-dropped parent=%s item=%d reason=not-an-object", parent.id, j)
            continue
        missing = [f for f in SYNTH_FIELDS if not isinstance(item.get(f), str) or not item[f].strip()]
        if missing:
            logger.warning("synth-item-dropped parent=%s item=%d reason=missing:%s", parent.id, j, ",".join(missing))
            continue
        try:
            case = CciCase(
                id=_unique_id(f"{parent.id}~syn{iteration}.{j}", taken),
                comment_type=parent.comment_type,
                old_comment=item["old_comment"],
                new_comment=item["new_comment"],
                old_code=item["old_code"],
                new_code=item["new_code"],
                label=parent.label,
                split=parent.split,
                synthetic=True,
                parent_id=parent.id,
            )
        except ValidationError as exc:
            logger.warning("synth-item-dropped parent=%s item=%d reason=%s", parent.id, j, exc.errors()[0]["msg"])
            continue
        cases.append(case)
    return cases


def synthesize_cases(
    teacher: LlmEndpoint,
    sampled: Sequence[CciCase],
    *,
    generations: int = 2,
    iteration: int = 0,
    existing_ids: Optional[Set[str]] = None,
    gateway: Optional[LlmGateway] = None,
    max_tokens: int = 2048,
) -> List[CciCase]:
    """Ask the teacher for ``generations`` cases per parent; labels come from the parent."""
    if not sampled:
        return []
    gw = gateway or default_gateway()
    requests = [ChatRequest(messages=build_synthesis_prompt(c, generations), max_tokens=max_tokens) for c in sampled]
    results = gw.chat_complete_batch(teacher, requests)
    taken = set(existing_ids or ())
    out: List[CciCase] = []
    for parent, result in zip(sampled, results):
        if not result.ok:
            logger.warning("synth-request-failed parent=%s error=%s", parent.id, result.error)
            continue
        out.extend(parse_synthetic(result.text or "", parent, iteration, taken, generations))
    logger.info("synth-done parents=%d cases=%d", len(sampled), len(out))
    return out


def iterative_enhance(
    detector_init: DetectorModel,
    d0: Corpus,
    teacher: LlmEndpoint,
    config: Optional[EnhanceConfig] = None,
    detector_config: Optional[DetectorConfig] = None,
    *,
    gateway: Optional[LlmGateway] = None,
    max_tokens: int = 2048,
    trainer: Callable = train,
) -> Tuple[Corpus, List[IterationRecord]]:
    """Grow ``d0`` with synthetic cases until the iteration cap or convergence.

    Every round trains from ``detector_init``; the iteration cap wins over
    the convergence test.
    """
    cfg = config or EnhanceConfig()
    if any(c.label is None for c in d0.cases):
        raise DataError("enhancement needs a fully labeled corpus")
    originals = d0.with_cases([c for c in d0.cases if not c.synthetic])
    current = d0
    history: List[IterationRecord] = []
    prev_f1: Optional[float] = None
    iteration = 0
    while True:
        model, _ = trainer(detector_init, current, detector_config)
        report = evaluate(model, d0)
        record = IterationRecord(
            iteration=iteration,
            corpus_size=len(current),
            d0_metrics=report.metrics,
            misclassified=len(report.misclassified),
        )
        f1 = report.metrics.f1
        if iteration >= cfg.max_iterations:
            record.stop_reason = "max-iterations"
        elif cfg.convergence_delta is not None and prev_f1 is not None and f1 - prev_f1 < cfg.convergence_delta:
            record.stop_reason = "converged"
        elif not report.misclassified:
            record.stop_reason = "no-errors"
        if record.stop_reason:
            history.append(record)
            logger.info("enhance-stop iteration=%d reason=%s size=%d f1=%.4f", iteration, record.stop_reason, len(current), f1)
            return current, history

        sampled = sample_errors(report.misclassified, originals, cfg.sampling_rate, cfg.seed + iteration)
        synthetic = synthesize_cases(
            teacher,
            sampled,
            generations=cfg.generations_per_case,
            iteration=iteration,
            existing_ids=set(current.by_id()),
            gateway=gateway,
            max_tokens=max_tokens,
        )
        record.sampled_ids = [c.id for c in sampled]
        record.synthesized = len(synthetic)
        history.append(record)
        logger.info(
            "enhance-iteration iteration=%d size=%d f1=%.4f errors=%d sampled=%d synthesized=%d",
            iteration,
            len(current),
            f1,
            len(report.misclassified),
            len(sampled),
            len(synthetic),
        )
        current = current.with_cases(list(current.cases) + synthetic)
        prev_f1 = f1
        iteration += 1
