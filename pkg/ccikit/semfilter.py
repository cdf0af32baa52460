"""Semantic false-positive filtering by three LLM voters."""

import logging
import random
import re
from collections import Counter
from importlib import resources
from typing import List, Optional, Sequence, Tuple

import orjson

from ccikit.config import GatewayConfig, LlmEndpoint
from ccikit.errors import ConfigError, DataError
from ccikit.llm_gateway import ChatMessage, ChatRequest, LlmGateway, default_gateway
from ccikit.models import INCONSISTENT, CciCase, Corpus, ShotExample, Verdict, VoteRecord

logger = logging.getLogger(__name__)

REQUIRED_SHOT_KINDS = ("return_type", "method_signature", "application_logic")

_INCONSISTENT_RE = re.compile(r"\binconsistent\b", re.IGNORECASE)
_CONSISTENT_RE = re.compile(r"\bconsistent\b", re.IGNORECASE)

SYSTEM_PROMPT = (
    "You review Java method changes. Given a method comment written for the old version of a "
    "method, the old code and the new code, decide whether the comment is still consistent with "
    "the new code. A comment is inconsistent when the new code contradicts what it states, for "
    "example a changed return type, a changed method signature or changed application logic. "
    "Answer with exactly one word: INCONSISTENT or CONSISTENT."
)


def load_shots(path: Optional[str] = None) -> List[ShotExample]:
    """Read and validate the shot roster; the packaged default is used when ``path`` is None."""
    if path:
        with open(path, "rb") as fh:
            raw = orjson.loads(fh.read())
    else:
        raw = orjson.loads(resources.files("ccikit.data").joinpath("vote_shots.json").read_bytes())
    shots = [ShotExample.model_validate(item) for item in raw]
    validate_shots(shots)
    return shots


def validate_shots(shots: Sequence[ShotExample]) -> None:
    if len(shots) != 4:
        raise ConfigError(f"exactly 4 vote shots are required, got {len(shots)}")
    consistent = [s for s in shots if s.gold_verdict == "consistent"]
    kinds = Counter(s.inconsistency_kind for s in shots if s.gold_verdict == "inconsistent")
    if len(consistent) != 1 or any(kinds[k] != 1 for k in REQUIRED_SHOT_KINDS):
        raise ConfigError(
            "vote shots must hold one consistent example and one inconsistent example of each kind "
            f"{', '.join(REQUIRED_SHOT_KINDS)}"
        )


def _case_block(case: CciCase) -> str:
    return "\n".join(
        [
            f"Old comment:\n{case.old_comment}",
            f"Old code:\n{case.old_code}",
            f"New code:\n{case.new_code}",
        ]
    )


def build_vote_prompt(case: CciCase, shots: Sequence[ShotExample]) -> List[ChatMessage]:
    validate_shots(shots)
    for field in ("old_comment", "old_code", "new_code"):
        if not getattr(case, field, None):
            raise DataError(f"case {case.id} is missing {field}")
    parts = ["Here are four solved examples.", ""]
    for i, shot in enumerate(shots, start=1):
        parts += [f"### Example {i}", _case_block(shot.case), f"Answer: {shot.gold_verdict.upper()}", ""]
    parts += [
        "### Target",
        _case_block(case),
        "",
        "Is the old comment consistent with the new code? Answer INCONSISTENT or CONSISTENT.",
    ]
    return [ChatMessage(role="system", content=SYSTEM_PROMPT), ChatMessage(role="user", content="\n".join(parts))]


def parse_verdict(completion: Optional[str]) -> Verdict:
    """First whole-word INCONSISTENT/CONSISTENT, case-insensitive; anything else is unparseable."""
    text = completion or ""
    incon = _INCONSISTENT_RE.search(text)
    con = _CONSISTENT_RE.search(text)
    if incon and (con is None or incon.start() <= con.start()):
        return "inconsistent"
    if con:
        return "consistent"
    return "unparseable"


def majority_vote(verdicts: Sequence[Verdict]) -> Tuple[str, bool]:
    if len(verdicts) != 3:
        raise DataError(f"majority_vote needs exactly 3 verdicts, got {len(verdicts)}")
    yes = sum(1 for v in verdicts if v == "inconsistent")
    return ("keep" if yes >= 2 else "discard"), yes == 3


def semantic_filter(
    corpus: Corpus,
    voters: Sequence[LlmEndpoint],
    shots: Sequence[ShotExample],
    *,
    gateway: Optional[LlmGateway] = None,
    max_in_flight: Optional[int] = None,
    max_tokens: Optional[int] = None,
) -> Tuple[Corpus, List[VoteRecord]]:
    """Query every label-inconsistent case; keep it only on a two-of-three inconsistent vote.

    Label-consistent cases pass through without a query. Gateway failures
    count as unparseable verdicts. ``max_tokens`` defaults to
    ``GatewayConfig.vote_max_tokens``.
    """
    if len(voters) != 3:
        raise ConfigError(f"exactly 3 voters are required, got {len(voters)}")
    validate_shots(shots)
    gw = gateway or default_gateway()

    positives = [c for c in corpus.cases if c.label == INCONSISTENT]
    if max_tokens is None:
        max_tokens = GatewayConfig().vote_max_tokens
    requests = [ChatRequest(messages=build_vote_prompt(c, shots), max_tokens=max_tokens) for c in positives]

    per_voter: List[List[Verdict]] = []
    for voter in voters:
        results = gw.chat_complete_batch(voter, requests, max_in_flight)
        verdicts: List[Verdict] = []
        for case, result in zip(positives, results):
            if not result.ok:
                logger.warning("vote-failed voter=%s id=%s error=%s", voter.name, case.id, result.error)
                verdicts.append("unparseable")
            else:
                verdicts.append(parse_verdict(result.text))
        per_voter.append(verdicts)
        logger.info("vote-collected voter=%s cases=%d", voter.name, len(positives))

    records: List[VoteRecord] = []
    discarded = set()
    for i, case in enumerate(positives):
        verdicts = [per_voter[v][i] for v in range(3)]
        decision, unanimous = majority_vote(verdicts)
        records.append(
            VoteRecord(
                case_id=case.id,
                verdicts=[(voters[v].name, verdicts[v]) for v in range(3)],
                decision=decision,
                unanimous=unanimous,
            )
        )
        if decision == "discard":
            discarded.add(case.id)
            logger.debug("vote-discard id=%s verdicts=%s", case.id, ",".join(verdicts))

    kept = [c for c in corpus.cases if c.id not in discarded]
    logger.info("semfilter-done queried=%d kept=%d discarded=%d", len(positives), len(positives) - len(discarded), len(discarded))
    return corpus.with_cases(kept), records


def select_validated_candidates(records: Sequence[VoteRecord], corpus: Corpus, n: int, seed: int = 42) -> Corpus:
    """Seeded sample of up to ``n`` unanimously-inconsistent test cases, in corpus order."""
    unanimous = {r.case_id for r in records if r.unanimous}
    pool = [c for c in corpus.cases if c.id in unanimous and c.split == "test" and c.label == INCONSISTENT]
    if n >= len(pool):
        if n > len(pool):
            logger.warning("validated-candidates-short requested=%d available=%d", n, len(pool))
        chosen = {c.id for c in pool}
    else:
        chosen = {c.id for c in random.Random(seed).sample(pool, n)}
    return corpus.with_cases([c for c in corpus.cases if c.id in chosen])
