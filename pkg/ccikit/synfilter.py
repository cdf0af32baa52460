"""Syntactic false-positive filters for label-inconsistent cases.

Four rules, checked in a fixed order; the first that fires removes the case:
TypoFix, CaseChange, StopwordChange, LexicalChange.
"""

import logging
from collections import Counter
from typing import Iterable, List, Optional, Set, Tuple

from nltk.metrics.distance import edit_distance

from ccikit.diffscript import WordPair, comment_word_diff
from ccikit.errors import DataError
from ccikit.lexing import TokenSeq, code_vocabulary, tokenize_comment
from ccikit.models import INCONSISTENT, CciCase, Corpus, FilterRemoval, FilterReport, FilterVerdict

logger = logging.getLogger(__name__)

STOPWORDS = frozenset({"a", "an", "the", "in", "on", "at", "by"})
RULE_ORDER = ("TypoFix", "CaseChange", "StopwordChange", "LexicalChange")

_INFLECTIONS = ("s", "es", "ed", "d", "ing", "er", "est", "ly")

_IRREGULAR = {
    "is": "be", "are": "be", "was": "be", "were": "be", "been": "be", "being": "be", "am": "be",
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do", "doing": "do",
    "goes": "go", "went": "go", "gone": "go",
    "made": "make", "got": "get", "gotten": "get", "given": "give", "gave": "give",
    "taken": "take", "took": "take", "written": "write", "wrote": "write",
    "found": "find", "built": "build", "sent": "send", "kept": "keep", "held": "hold",
    "writing": "write", "thrown": "throw", "threw": "throw", "read": "read", "set": "set", "put": "put",
    "children": "child", "indices": "index", "vertices": "vertex", "matrices": "matrix",
    "data": "data", "used": "use", "uses": "use", "using": "use",
}

_VOWELS = set("aeiou")


def levenshtein(a: str, b: str) -> int:
    return edit_distance(a or "", b or "")


def _is_cvc(stem: str) -> bool:
    if len(stem) < 3:
        return False
    c1, v, c2 = stem[-3], stem[-2], stem[-1]
    return c1 not in _VOWELS and v in _VOWELS and c2 not in _VOWELS and c2 not in "wxy"


def _restore_stem(stem: str) -> str:
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS and stem[-1] not in "lsz":
        return stem[:-1]
    if stem.endswith(("at", "bl", "iz")):
        return stem + "e"
    if len(stem) == 3 and _is_cvc(stem):
        return stem + "e"
    if stem.endswith(("ak", "ok", "ot", "ut", "ar", "ur", "iv", "ov", "av")) and _is_cvc(stem):
        return stem + "e"
    return stem


def lemmatize(word: str) -> str:
    """Suffix-table lemmatizer for English comment words.

    >>> [lemmatize(w) for w in ("checks", "running", "creating", "check")]
    ['check', 'run', 'create', 'check']
    """
    w = (word or "").lower()
    if w in _IRREGULAR:
        return _IRREGULAR[w]
    if len(w) <= 3:
        return w
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("sses"):
        return w[:-2]
    if w.endswith(("xes", "ches", "shes", "zes")):
        return w[:-2]
    if w.endswith(("ss", "us", "is")):
        return w
    if w.endswith("s"):
        return w[:-1]
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ing") and len(w) - 3 >= 3:
        stem = w[:-3]
        if any(ch in _VOWELS or ch == "y" for ch in stem):
            return _restore_stem(stem)
    if w.endswith("ed") and len(w) - 2 >= 3:
        stem = w[:-2]
        if any(ch in _VOWELS or ch == "y" for ch in stem):
            return _restore_stem(stem)
    return w


def _is_inflection(a: str, b: str) -> bool:
    short, long_ = sorted((a.lower(), b.lower()), key=len)
    if long_.startswith(short) and long_[len(short):] in _INFLECTIONS:
        return True
    return short.endswith("y") and long_ == short[:-1] + "ies"


def _substitutions(pairs: List[WordPair]) -> bool:
    return all(old is not None and new is not None for old, new in pairs)


def _changed_pairs(old_c: TokenSeq, new_c: TokenSeq) -> List[WordPair]:
    pairs, _ = comment_word_diff(old_c, new_c)
    return pairs


def is_typo_fix(old_c: TokenSeq, new_c: TokenSeq, old_code_vocab: Set[str]) -> bool:
    pairs = _changed_pairs(old_c, new_c)
    if len(pairs) != 1 or not _substitutions(pairs):
        return False
    old, new = pairs[0]
    lo, ln = old.lower(), new.lower()
    # spelling corrections only; casing, stopword swaps and inflections have their own rules
    if lo == ln or (lo in STOPWORDS and ln in STOPWORDS) or _is_inflection(lo, ln):
        return False
    return 1 <= levenshtein(lo, ln) <= 3 and lo not in old_code_vocab


def is_case_change(old_c: TokenSeq, new_c: TokenSeq, old_code_vocab: Set[str]) -> bool:
    pairs = _changed_pairs(old_c, new_c)
    if not pairs or not _substitutions(pairs):
        return False
    return all(
        old != new and old.lower() == new.lower() and old.lower() not in old_code_vocab for old, new in pairs
    )


def is_stopword_change(old_c: TokenSeq, new_c: TokenSeq) -> bool:
    old_words = Counter(w.lower() for w in old_c)
    new_words = Counter(w.lower() for w in new_c)
    sym_diff = (old_words - new_words) + (new_words - old_words)
    return bool(sym_diff) and all(w in STOPWORDS for w in sym_diff)


def is_lexical_change(old_c: TokenSeq, new_c: TokenSeq, old_code_vocab: Set[str]) -> bool:
    pairs = _changed_pairs(old_c, new_c)
    if not pairs or not _substitutions(pairs):
        return False
    return all(
        old != new and lemmatize(old.lower()) == lemmatize(new.lower()) and old.lower() not in old_code_vocab
        for old, new in pairs
    )


def classify_case(case: CciCase, old_code_vocab: Optional[Set[str]] = None) -> FilterVerdict:
    """Return the first rule that explains the comment change, or rule None."""
    if case.new_comment is None:
        raise DataError(f"case {case.id} has no new_comment; syntactic filters need both comments")
    old_c = tokenize_comment(case.old_comment)
    new_c = tokenize_comment(case.new_comment)
    vocab = old_code_vocab if old_code_vocab is not None else code_vocabulary(case.old_code)
    pairs = _changed_pairs(old_c, new_c)
    checks = (
        ("TypoFix", lambda: is_typo_fix(old_c, new_c, vocab)),
        ("CaseChange", lambda: is_case_change(old_c, new_c, vocab)),
        ("StopwordChange", lambda: is_stopword_change(old_c, new_c)),
        ("LexicalChange", lambda: is_lexical_change(old_c, new_c, vocab)),
    )
    for rule, check in checks:
        if check():
            return FilterVerdict(rule=rule, evidence=pairs)
    return FilterVerdict()


def _pair_is_trivial(old: Optional[str], new: Optional[str], old_code_vocab: Set[str]) -> bool:
    """One changed word pair that a single rule would have dropped on its own."""
    if old is None or new is None:
        return (old or new or "").lower() in STOPWORDS
    lo, ln = old.lower(), new.lower()
    if lo in STOPWORDS and ln in STOPWORDS:
        return True
    # same guard as the per-rule checks: a word taken from the old code is never trivial
    if lo in old_code_vocab:
        return False
    if lo == ln or lemmatize(lo) == lemmatize(ln):
        return True
    return not _is_inflection(lo, ln) and 1 <= levenshtein(lo, ln) <= 3


def _is_mixed(case: CciCase, old_code_vocab: Set[str]) -> bool:
    pairs = _changed_pairs(tokenize_comment(case.old_comment), tokenize_comment(case.new_comment or ""))
    return len(pairs) > 1 and all(_pair_is_trivial(o, n, old_code_vocab) for o, n in pairs)


def apply_syntactic_filters(corpus: Corpus) -> Tuple[Corpus, FilterReport]:
    report = FilterReport()
    kept: List[CciCase] = []
    for case in corpus.cases:
        if case.label != INCONSISTENT:
            kept.append(case)
            continue
        vocab = code_vocabulary(case.old_code)
        verdict = classify_case(case, vocab)
        if verdict.rule == "None":
            if _is_mixed(case, vocab):
                report.unmatched_mixed_ids.append(case.id)
                logger.info("synfilter-mixed-unmatched id=%s", case.id)
            kept.append(case)
            continue
        report.counts[verdict.rule] += 1
        report.removed.append(FilterRemoval(case_id=case.id, verdict=verdict))
        logger.debug("synfilter-removed id=%s rule=%s", case.id, verdict.rule)
    logger.info(
        "synfilter-done input=%d removed=%d %s",
        len(corpus),
        report.total_removed,
        " ".join(f"{rule}={report.counts[rule]}" for rule in RULE_ORDER),
    )
    return corpus.with_cases(kept), report


def filter_ids(report: FilterReport) -> Iterable[str]:
    return (r.case_id for r in report.removed)
