"""Detection and comment-fix metrics.

Text metrics are sentence-level and averaged over cases; a corpus score is
the mean per-case score times 100, rounded to two decimals.
"""

import csv
import logging
import math
from collections import Counter
from statistics import mean
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set

from nltk.stem.porter import PorterStemmer
from nltk.util import ngrams
from pydantic import BaseModel, Field, field_validator

from ccikit.config import ensure_parent
from ccikit.errors import DataError
from ccikit.lexing import tokenize_comment

logger = logging.getLogger(__name__)

MAX_ORDER = 4
TEXT_METRICS = ("bleu4", "meteor", "sari", "gleu")

_stemmer = PorterStemmer()


def metric_tokens(text: str) -> List[str]:
    """Lowercased comment words, punctuation stripped."""
    return [w.lower() for w in tokenize_comment(text).tokens]


def _counts(words: Sequence[str], n: int) -> Counter:
    return Counter(ngrams(words, n)) if len(words) >= n else Counter()


def _geometric_score(numerators: List[int], denominators: List[int], cand_len: int, ref_len: int) -> float:
    if cand_len == 0 or numerators[0] == 0:
        return 0.0
    log_sum = 0.0
    for n, (num, den) in enumerate(zip(numerators, denominators), start=1):
        if n >= 2 and num == 0:
            num, den = num + 1, den + 1
        log_sum += math.log(num / den)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum / len(numerators))


def bleu4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence BLEU-4: clipped n-gram precision, uniform weights, brevity penalty.

    For n >= 2 an order with no matches is smoothed to (0 + 1) / (total + 1).
    """
    nums, dens = [], []
    for n in range(1, MAX_ORDER + 1):
        cand = _counts(candidate, n)
        ref = _counts(reference, n)
        nums.append(sum(min(c, ref[g]) for g, c in cand.items()))
        dens.append(sum(cand.values()))
    return _geometric_score(nums, dens, len(candidate), len(reference))


def gleu(source: Sequence[str], candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Single-reference GLEU: BLEU whose matches lose n-grams shared with source but not reference."""
    nums, dens = [], []
    for n in range(1, MAX_ORDER + 1):
        cand = _counts(candidate, n)
        ref = _counts(reference, n)
        penal = _counts(source, n) - ref
        matched = sum(min(c, ref[g]) for g, c in cand.items())
        penalty = sum(min(c, penal[g]) for g, c in cand.items())
        nums.append(max(0, matched - penalty))
        dens.append(sum(cand.values()))
    return _geometric_score(nums, dens, len(candidate), len(reference))


def _align_stage(
    candidate: Sequence[str],
    reference: Sequence[str],
    key: Callable[[str], str],
    aligned: Dict[int, int],
) -> None:
    ref_keys = [key(w) for w in reference]
    used_r = set(aligned.values())
    last_r = -1
    for i, word in enumerate(candidate):
        if i in aligned:
            last_r = aligned[i]
            continue
        k = key(word)
        options = [j for j, rk in enumerate(ref_keys) if rk == k and j not in used_r]
        if not options:
            continue
        # first free match after the previous alignment keeps crossings down
        after = [j for j in options if j > last_r]
        j = after[0] if after else options[0]
        aligned[i] = j
        used_r.add(j)
        last_r = j


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """METEOR with exact then Porter-stem matching, no synonym stage."""
    aligned: Dict[int, int] = {}
    _align_stage(candidate, reference, lambda w: w, aligned)
    _align_stage(candidate, reference, _stemmer.stem, aligned)
    m = len(aligned)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    pairs = sorted(aligned.items())
    chunks = 1
    for (c0, r0), (c1, r1) in zip(pairs, pairs[1:]):
        if c1 != c0 + 1 or r1 != r0 + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


def _ngram_set(words: Sequence[str], n: int) -> Set[tuple]:
    return set(ngrams(words, n)) if len(words) >= n else set()


def _op_f1(predicted: Set, gold: Set) -> float:
    if not gold:
        return 1.0 if not predicted else 0.0
    if not predicted:
        return 0.0
    correct = len(predicted & gold)
    p, r = correct / len(predicted), correct / len(gold)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _op_precision(predicted: Set, gold: Set) -> float:
    if not gold:
        return 1.0 if not predicted else 0.0
    if not predicted:
        return 0.0
    return len(predicted & gold) / len(predicted)


def sari_components(source: Sequence[str], candidate: Sequence[str], reference: Sequence[str]) -> List[Dict[str, float]]:
    """Per-order add F1, keep F1 and delete precision."""
    if not reference:
        raise DataError("sari needs a nonempty reference")
    rows = []
    for n in range(1, MAX_ORDER + 1):
        s, c, r = _ngram_set(source, n), _ngram_set(candidate, n), _ngram_set(reference, n)
        rows.append(
            {
                "add": _op_f1(c - s, r - s),
                "keep": _op_f1(c & s, r & s),
                "del": _op_precision(s - c, s - r),
            }
        )
    return rows


def sari(source: Sequence[str], candidate: Sequence[str], reference: Sequence[str]) -> float:
    rows = sari_components(source, candidate, reference)
    return mean((row["add"] + row["keep"] + row["del"]) / 3 for row in rows)


class ClassificationMetrics(BaseModel):
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    zero_division: List[str] = Field(default_factory=list)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _as_label(value) -> int:
    if value in (1, True, "inconsistent"):
        return 1
    if value in (0, False, "consistent"):
        return 0
    raise DataError(f"not a binary label: {value!r}")


def classification_metrics(predictions: Sequence, labels: Sequence) -> ClassificationMetrics:
    """Accuracy, precision, recall and F1 with inconsistent as the positive class.

    A zero denominator yields 0 and is named in ``zero_division``.
    """
    if len(predictions) != len(labels):
        raise DataError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise DataError("classification_metrics needs at least one case")
    tp = fp = fn = tn = 0
    for pred, gold in zip(predictions, labels):
        p, g = _as_label(pred), _as_label(gold)
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    flags: List[str] = []
    precision = tp / (tp + fp) if tp + fp else 0.0
    if tp + fp == 0:
        flags.append("precision")
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp + fn == 0:
        flags.append("recall")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    if precision + recall == 0:
        flags.append("f1")
    return ClassificationMetrics(
        accuracy=(tp + tn) / len(labels),
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        zero_division=flags,
    )


def success_rate(judgments: Sequence[bool]) -> float:
    if not judgments:
        raise DataError("success_rate needs at least one judgment")
    return sum(1 for j in judgments if j) / len(judgments)


class ScoredPair(BaseModel):
    case_id: str
    source: List[str]
    candidate: List[str]
    reference: List[str]

    @field_validator("reference")
    @classmethod
    def reference_nonempty(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("reference must be nonempty")
        return v

    @classmethod
    def from_texts(cls, case_id: str, source: str, candidate: Optional[str], reference: str) -> "ScoredPair":
        return cls(
            case_id=case_id,
            source=metric_tokens(source),
            candidate=metric_tokens(candidate or ""),
            reference=metric_tokens(reference),
        )


def score_pair(pair: ScoredPair, metric: str) -> float:
    if metric == "bleu4":
        return bleu4(pair.candidate, pair.reference)
    if metric == "meteor":
        return meteor(pair.candidate, pair.reference)
    if metric == "sari":
        return sari(pair.source, pair.candidate, pair.reference)
    if metric == "gleu":
        return gleu(pair.source, pair.candidate, pair.reference)
    raise DataError(f"unknown metric {metric!r}; choose from {', '.join(TEXT_METRICS)}")


def corpus_score(per_case: Iterable[float]) -> float:
    values = list(per_case)
    if not values:
        return 0.0
    return round(mean(values) * 100, 2)


class MetricsReport(BaseModel):
    schema_version: int = 1
    cases: int
    scores: Dict[str, float]
    per_case: List[Dict[str, object]]


def score_corpus(pairs: Sequence[ScoredPair], metrics: Sequence[str] = TEXT_METRICS) -> MetricsReport:
    per_case: List[Dict[str, object]] = []
    columns: Dict[str, List[float]] = {m: [] for m in metrics}
    for pair in pairs:
        row: Dict[str, object] = {"case_id": pair.case_id}
        for metric in metrics:
            value = score_pair(pair, metric)
            columns[metric].append(value)
            row[metric] = value
        per_case.append(row)
    scores = {metric: corpus_score(values) for metric, values in columns.items()}
    logger.info("fix-metrics cases=%d %s", len(pairs), " ".join(f"{k}={v}" for k, v in scores.items()))
    return MetricsReport(cases=len(pairs), scores=scores, per_case=per_case)


def write_metrics_csv(report: MetricsReport, path: str) -> None:
    with open(ensure_parent(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "score", "cases"])
        for metric, score in report.scores.items():
            writer.writerow([metric, f"{score:.2f}", report.cases])
