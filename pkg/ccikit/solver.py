"""Detect-then-fix over a batch of cases, with per-case timing.

Only cases the detector flags go to the fixer backend. With ``route_all``
every case goes to the fixer and detection is skipped, which gives the
monolithic baseline to compare against.
"""

import logging
import time
from statistics import mean
from typing import Callable, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel

from ccikit.config import LlmEndpoint
from ccikit.detector import DetectorModel, predict
from ccikit.errors import BackendError
from ccikit.fixer import FIX_MAX_TOKENS, fix_comment
from ccikit.file_writer import JsonlWriter
from ccikit.llm_gateway import LlmGateway, default_gateway
from ccikit.models import CciCase, Corpus, Prediction

logger = logging.getLogger(__name__)


class SolveRecord(BaseModel):
    case_id: str
    verdict: Optional[Literal["inconsistent", "consistent"]] = None
    probability: Optional[float] = None
    routed: bool = False
    predicted_comment: Optional[str] = None
    fix_error: Optional[str] = None
    latency_s: float


class TimingReport(BaseModel):
    schema_version: int = 1
    mode: Literal["gated", "route-all"]
    n: int
    flagged: int
    fixer_calls: int
    fix_errors: int
    warmup_s: Optional[float] = None
    mean_per_case_s: Optional[float] = None
    total_s: float


def _predictor(detector) -> Callable[[CciCase], Prediction]:
    if isinstance(detector, DetectorModel):
        return lambda case: predict(detector, case)
    return detector.predict


def solve(
    corpus: Corpus,
    detector,
    fixer: LlmEndpoint,
    *,
    gateway: Optional[LlmGateway] = None,
    route_all: bool = False,
    max_tokens: int = FIX_MAX_TOKENS,
) -> Tuple[List[SolveRecord], TimingReport]:
    """Run every case through detection and fix the flagged ones.

    Per-case time runs from detection start to the verdict, or to the end of
    the fix for flagged cases. The first case is a warm-up: it is timed but
    left out of the mean. A failed fix leaves ``fix_error`` set and the run
    goes on.
    """
    gw = gateway or default_gateway()
    predictor = None if route_all else _predictor(detector)
    records: List[SolveRecord] = []
    fixer_calls = 0
    run_started = time.perf_counter()
    for case in corpus.cases:
        started = time.perf_counter()
        record = SolveRecord(case_id=case.id, latency_s=0.0)
        if predictor is not None:
            pred = predictor(case)
            record.verdict = pred.verdict
            record.probability = pred.probability
            record.routed = pred.verdict == "inconsistent"
        else:
            record.routed = True
        if record.routed:
            fixer_calls += 1
            try:
                record.predicted_comment = fix_comment(fixer, case, gateway=gw, max_tokens=max_tokens).predicted_comment
            except BackendError as exc:
                record.fix_error = str(exc)
                logger.warning("solve-fix-failed id=%s error=%s", case.id, exc)
        record.latency_s = time.perf_counter() - started
        records.append(record)

    latencies = [r.latency_s for r in records]
    timed = latencies[1:]
    report = TimingReport(
        mode="route-all" if route_all else "gated",
        n=len(records),
        flagged=sum(1 for r in records if r.verdict == "inconsistent"),
        fixer_calls=fixer_calls,
        fix_errors=sum(1 for r in records if r.fix_error),
        warmup_s=latencies[0] if latencies else None,
        mean_per_case_s=mean(timed) if timed else None,
        total_s=time.perf_counter() - run_started,
    )
    logger.info(
        "solve-done mode=%s n=%d flagged=%d fixer_calls=%d fix_errors=%d mean_s=%s",
        report.mode,
        report.n,
        report.flagged,
        report.fixer_calls,
        report.fix_errors,
        report.mean_per_case_s,
    )
    return records, report


def write_solve_records(records: Sequence[SolveRecord], path: str) -> None:
    with JsonlWriter(path) as writer:
        writer.write_all(records)
