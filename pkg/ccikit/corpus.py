"""Corpus IO and hygiene: JSON Lines load/save, de-duplication, split leaks."""

import hashlib
import logging
from collections import Counter, defaultdict
from typing import Dict, List, Tuple

import orjson
from pydantic import ValidationError

from ccikit.errors import DataError
from ccikit.file_writer import JsonlWriter
from ccikit.models import (
    INCONSISTENT,
    CciCase,
    Corpus,
    CorpusStats,
    DedupReport,
    HygieneReport,
    HygieneViolation,
    MalformedLine,
)
from ccikit.text_utils import normalize_text

logger = logging.getLogger(__name__)

Quadruple = Tuple[str, str, str, str]


def load_corpus(path: str, *, permissive: bool = False) -> Corpus:
    """Read a JSON Lines corpus, keeping input order.

    A malformed line aborts the load with its line number unless
    ``permissive`` is set, in which case it is skipped and listed in
    ``Corpus.malformed``. Duplicate ids always abort.
    """
    try:
        with open(path, "rb") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc

    cases: List[CciCase] = []
    malformed: List[MalformedLine] = []
    seen: Dict[str, int] = {}
    for line_no, raw in enumerate(raw_lines, start=1):
        if not raw.strip():
            continue
        try:
            payload = orjson.loads(raw)
            if not isinstance(payload, dict):
                raise ValueError("record is not a JSON object")
            case = CciCase.model_validate(payload)
        except (orjson.JSONDecodeError, ValidationError, ValueError) as exc:
            if not permissive:
                raise DataError(f"{path}:{line_no}: malformed record: {exc}") from exc
            logger.warning("corpus-malformed-line path=%s line=%d", path, line_no)
            malformed.append(MalformedLine(line_no=line_no, error=str(exc).splitlines()[0]))
            continue
        if case.id in seen:
            raise DataError(f"{path}:{line_no}: duplicate case id {case.id!r} (first seen on line {seen[case.id]})")
        seen[case.id] = line_no
        cases.append(case)

    logger.info("corpus-loaded path=%s cases=%d malformed=%d", path, len(cases), len(malformed))
    return Corpus(cases=cases, source_path=path, malformed=malformed)


def save_corpus(corpus: Corpus, path: str) -> None:
    with JsonlWriter(path) as writer:
        for case in corpus.cases:
            writer.write(case.to_json_dict())
    logger.info("corpus-saved path=%s cases=%d", path, len(corpus))


def quadruple(case: CciCase) -> Quadruple:
    return (
        normalize_text(case.old_code),
        normalize_text(case.new_code),
        normalize_text(case.old_comment),
        normalize_text(case.new_comment or ""),
    )


def _quadruple_key(quad: Quadruple) -> str:
    return hashlib.sha256("\x1f".join(quad).encode("utf-8")).hexdigest()[:16]


def deduplicate(corpus: Corpus) -> Tuple[Corpus, DedupReport]:
    """Keep one case per normalized (old_code, new_code, old_comment, new_comment).

    Labels do not take part in grouping. Inside a group the first
    label-inconsistent case is kept; without one, the first occurrence is.
    """
    missing = [c.id for c in corpus.cases if c.new_comment is None]
    if missing:
        raise DataError(f"deduplicate needs new_comment on every case; missing on {missing[:5]}")

    groups: Dict[Quadruple, List[CciCase]] = defaultdict(list)
    for case in corpus.cases:
        groups[quadruple(case)].append(case)

    keep_ids = set()
    removed: List[str] = []
    groups_found = 0
    by_true_label = 0
    for members in groups.values():
        if len(members) == 1:
            keep_ids.add(members[0].id)
            continue
        groups_found += 1
        retained = next((c for c in members if c.label == INCONSISTENT), None)
        if retained is not None:
            by_true_label += 1
        else:
            retained = members[0]
        keep_ids.add(retained.id)
        removed.extend(c.id for c in members if c.id != retained.id)

    kept = [c for c in corpus.cases if c.id in keep_ids]
    report = DedupReport(groups_found=groups_found, removed_ids=removed, retained_by_true_label=by_true_label)
    logger.info("dedup-done input=%d groups=%d removed=%d", len(corpus), groups_found, len(removed))
    return corpus.with_cases(kept), report


def check_split_hygiene(corpus: Corpus) -> HygieneReport:
    """Report every normalized quadruple that appears in more than one split."""
    unassigned = [c.id for c in corpus.cases if c.split is None]
    if unassigned:
        raise DataError(f"split hygiene needs a split on every case; unassigned: {unassigned[:5]}")

    placements: Dict[Quadruple, Dict[str, List[str]]] = defaultdict(lambda: defaultdict(list))
    for case in corpus.cases:
        placements[quadruple(case)][case.split].append(case.id)

    violations = [
        HygieneViolation(quadruple_key=_quadruple_key(quad), ids_by_split={k: list(v) for k, v in by_split.items()})
        for quad, by_split in placements.items()
        if len(by_split) > 1
    ]
    if violations:
        logger.warning("split-leak-found violations=%d", len(violations))
    return HygieneReport(violations=violations)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    by_type_split: Dict[str, Dict[str, int]] = {}
    for comment_type in ("return", "param", "summary", "full"):
        by_type_split[comment_type] = {"train": 0, "valid": 0, "test": 0, "unassigned": 0, "total": 0}
    for case in corpus.cases:
        split = case.split or "unassigned"
        for bucket in (case.comment_type, "full"):
            by_type_split[bucket][split] += 1
            by_type_split[bucket]["total"] += 1
    labels = Counter(
        "inconsistent" if c.label == 1 else "consistent" if c.label == 0 else "unlabeled"
        for c in corpus.cases
    )
    return CorpusStats(
        total=len(corpus),
        by_type_split=by_type_split,
        by_label=dict(sorted(labels.items())),
        synthetic=sum(1 for c in corpus.cases if c.synthetic),
    )
