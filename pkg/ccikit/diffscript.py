"""Token-level edit scripts over code changes.

Matching is delegated to :class:`difflib.SequenceMatcher` with the junk
heuristic off; its longest-match search already breaks ties on the smallest
old index and then the smallest new index.
"""

import logging
from dataclasses import dataclass
from difflib import SequenceMatcher
from itertools import zip_longest
from typing import List, Literal, Optional, Sequence, Tuple

from ccikit.errors import DataError
from ccikit.lexing import TokenSeq

logger = logging.getLogger(__name__)

Action = Literal["Add", "Del", "Keep", "Replace"]

ADD, ADD_END = "<Add>", "<AddEnd>"
DEL, DEL_END = "<Del>", "<DelEnd>"
KEEP, KEEP_END = "<Keep>", "<KeepEnd>"
REPLACE_OLD, REPLACE_NEW, REPLACE_END = "<ReplaceOld>", "<ReplaceNew>", "<ReplaceEnd>"

MARKERS = frozenset({ADD, ADD_END, DEL, DEL_END, KEEP, KEEP_END, REPLACE_OLD, REPLACE_NEW, REPLACE_END})

_OPCODE_ACTION = {"equal": "Keep", "delete": "Del", "insert": "Add", "replace": "Replace"}


@dataclass(frozen=True)
class EditSpan:
    action: Action
    old_tokens: Tuple[str, ...] = ()
    new_tokens: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.action == "Keep":
            ok = bool(self.old_tokens) and self.old_tokens == self.new_tokens
        elif self.action == "Del":
            ok = bool(self.old_tokens) and not self.new_tokens
        elif self.action == "Add":
            ok = bool(self.new_tokens) and not self.old_tokens
        else:
            ok = bool(self.old_tokens) and bool(self.new_tokens)
        if not ok:
            raise DataError(f"malformed {self.action} span old={self.old_tokens!r} new={self.new_tokens!r}")

    @classmethod
    def keep(cls, tokens: Sequence[str]) -> "EditSpan":
        return cls("Keep", tuple(tokens), tuple(tokens))

    @classmethod
    def add(cls, tokens: Sequence[str]) -> "EditSpan":
        return cls("Add", (), tuple(tokens))

    @classmethod
    def delete(cls, tokens: Sequence[str]) -> "EditSpan":
        return cls("Del", tuple(tokens), ())

    @classmethod
    def replace(cls, old: Sequence[str], new: Sequence[str]) -> "EditSpan":
        return cls("Replace", tuple(old), tuple(new))


@dataclass(frozen=True)
class EditScript:
    spans: Tuple[EditSpan, ...]
    old_len: int
    new_len: int

    def __post_init__(self) -> None:
        for left, right in zip(self.spans, self.spans[1:]):
            if left.action == right.action:
                raise DataError(f"adjacent {left.action} spans; edit scripts must be maximal")
        if len(self.old_side()) != self.old_len or len(self.new_side()) != self.new_len:
            raise DataError("edit script lengths do not match its spans")

    def old_side(self) -> Tuple[str, ...]:
        return tuple(tok for span in self.spans for tok in span.old_tokens)

    def new_side(self) -> Tuple[str, ...]:
        return tuple(tok for span in self.spans for tok in span.new_tokens)

    def to_json_dict(self) -> dict:
        return {
            "old_len": self.old_len,
            "new_len": self.new_len,
            "spans": [
                {"action": s.action, "old": list(s.old_tokens), "new": list(s.new_tokens)} for s in self.spans
            ],
        }


def _tokens(seq) -> List[str]:
    return list(seq.tokens) if isinstance(seq, TokenSeq) else list(seq)


def _matcher(a, b) -> SequenceMatcher:
    return SequenceMatcher(None, _tokens(a), _tokens(b), autojunk=False)


def matching_blocks(a, b) -> List[Tuple[int, int, int]]:
    """Longest-common-block decomposition, ending with a zero-length sentinel."""
    return [tuple(block) for block in _matcher(a, b).get_matching_blocks()]


def build_edit_script(old, new) -> EditScript:
    old_toks, new_toks = _tokens(old), _tokens(new)
    spans: List[EditSpan] = []
    for tag, i1, i2, j1, j2 in _matcher(old_toks, new_toks).get_opcodes():
        spans.append(EditSpan(_OPCODE_ACTION[tag], tuple(old_toks[i1:i2]) if tag != "insert" else (),
                              tuple(new_toks[j1:j2]) if tag != "delete" else ()))
    return EditScript(tuple(spans), len(old_toks), len(new_toks))


def render_edit_script(script: EditScript) -> TokenSeq:
    out: List[str] = []
    for span in script.spans:
        for tok in span.old_tokens + span.new_tokens:
            if tok in MARKERS:
                raise DataError(f"token {tok!r} collides with an edit marker")
        if span.action == "Keep":
            out += [KEEP, *span.old_tokens, KEEP_END]
        elif span.action == "Del":
            out += [DEL, *span.old_tokens, DEL_END]
        elif span.action == "Add":
            out += [ADD, *span.new_tokens, ADD_END]
        else:
            out += [REPLACE_OLD, *span.old_tokens, REPLACE_NEW, *span.new_tokens, REPLACE_END]
    return TokenSeq(tuple(out), "code")


def _take_until(tokens: Sequence[str], start: int, end_marker: str) -> Tuple[List[str], int]:
    body: List[str] = []
    pos = start
    while pos < len(tokens) and tokens[pos] != end_marker:
        if tokens[pos] in MARKERS:
            raise DataError(f"unexpected marker {tokens[pos]!r} at {pos}, wanted {end_marker!r}")
        body.append(tokens[pos])
        pos += 1
    if pos == len(tokens):
        raise DataError(f"missing {end_marker!r}")
    return body, pos + 1


def parse_edit_script(rendered) -> EditScript:
    """Inverse of :func:`render_edit_script`."""
    tokens = _tokens(rendered)
    spans: List[EditSpan] = []
    pos = 0
    while pos < len(tokens):
        head = tokens[pos]
        if head == KEEP:
            body, pos = _take_until(tokens, pos + 1, KEEP_END)
            spans.append(EditSpan.keep(body))
        elif head == DEL:
            body, pos = _take_until(tokens, pos + 1, DEL_END)
            spans.append(EditSpan.delete(body))
        elif head == ADD:
            body, pos = _take_until(tokens, pos + 1, ADD_END)
            spans.append(EditSpan.add(body))
        elif head == REPLACE_OLD:
            old, pos = _take_until(tokens, pos + 1, REPLACE_NEW)
            new, pos = _take_until(tokens, pos, REPLACE_END)
            spans.append(EditSpan.replace(old, new))
        else:
            raise DataError(f"expected an opening marker at {pos}, got {head!r}")
    old_len = sum(len(s.old_tokens) for s in spans)
    new_len = sum(len(s.new_tokens) for s in spans)
    return EditScript(tuple(spans), old_len, new_len)


def apply_edit_script(script: EditScript, old) -> TokenSeq:
    old_toks = tuple(_tokens(old))
    if script.old_side() != old_toks:
        raise DataError(
            f"edit script does not apply: expected {script.old_len} old tokens matching the script, "
            f"got {len(old_toks)}"
        )
    kind = old.kind if isinstance(old, TokenSeq) else "code"
    return TokenSeq(script.new_side(), kind)


WordPair = Tuple[Optional[str], Optional[str]]


def comment_word_diff(old, new) -> Tuple[List[WordPair], int]:
    """Changed word pairs and the number of unchanged words.

    Inside each non-matching gap, deleted and inserted words are paired by
    position; the longer side pairs its extra words with ``None``.
    """
    old_words, new_words = _tokens(old), _tokens(new)
    pairs: List[WordPair] = []
    unchanged = 0
    for tag, i1, i2, j1, j2 in _matcher(old_words, new_words).get_opcodes():
        if tag == "equal":
            unchanged += i2 - i1
            continue
        pairs.extend(zip_longest(old_words[i1:i2], new_words[j1:j2]))
    return pairs, unchanged
