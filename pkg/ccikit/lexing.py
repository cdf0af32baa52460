"""Token streams for Java-flavoured method source and method comments.

This is a maximal-munch lexer, not a grammar: the diff and the filters only
ever look at token sequences.
"""

import logging
import re
import string
from dataclasses import dataclass, field
from typing import List, Literal, Tuple

logger = logging.getLogger(__name__)

# longest first so that the alternation is maximal munch
_OPERATORS = sorted(
    [
        ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||",
        "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
    ],
    key=len,
    reverse=True,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<block_comment>/\*.*?(?:\*/|\Z))
  | (?P<line_comment>//[^\n]*)
  | (?P<string>"(?:\\.|[^"\\])*(?:"|\Z))
  | (?P<char>'(?:\\.|[^'\\])*(?:'|\Z))
  | (?P<number>0[xX][0-9a-fA-F_]+[lL]?|(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[fFdDlL]?)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>""" + "|".join(re.escape(op) for op in _OPERATORS) + r""")
  | (?P<punct>.)
    """,
    re.VERBOSE | re.DOTALL,
)

# whitespace inside a literal is written as a Java escape so tokens stay whitespace-free
_LITERAL_WS = {" ": "\\s", "\t": "\\t", "\n": "\\n", "\r": "\\r", "\f": "\\f", "\v": "\\u000B"}

_CLOSED_STRING = re.compile(r'"(?:\\.|[^"\\])*"', re.DOTALL)
_CLOSED_CHAR = re.compile(r"'(?:\\.|[^'\\])*'", re.DOTALL)
_SUBTOKEN_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")
_JAVADOC_FURNITURE = re.compile(r"/\*\*|/\*|\*/")
_LEADING_STAR = re.compile(r"^\s*\*+", re.MULTILINE)
_PUNCT = string.punctuation


@dataclass(frozen=True)
class TokenSeq:
    tokens: Tuple[str, ...]
    kind: Literal["code", "comment"]
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token {tok!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def render(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def of(cls, tokens: List[str], kind: Literal["code", "comment"] = "code") -> "TokenSeq":
        return cls(tuple(tokens), kind)


def _escape_literal(body: str) -> str:
    if not any(ch.isspace() for ch in body):
        return body
    return "".join(_LITERAL_WS.get(ch, "\\u%04X" % ord(ch) if ch.isspace() else ch) for ch in body)


def tokenize_code(raw: str) -> TokenSeq:
    """Lex method source into identifiers, literals, operators and punctuation.

    Comments and whitespace are dropped. Unterminated strings and block
    comments run to the end of input and are reported in ``warnings``.
    """
    tokens: List[str] = []
    warnings: List[str] = []
    for match in _TOKEN_RE.finditer(raw or ""):
        kind = match.lastgroup
        text = match.group(kind)
        if kind in ("ws", "line_comment"):
            continue
        if kind == "block_comment":
            if not text.endswith("*/") or len(text) < 4:
                warnings.append(f"unterminated block comment at offset {match.start()}")
            continue
        if kind in ("string", "char"):
            closed = _CLOSED_STRING if kind == "string" else _CLOSED_CHAR
            if not closed.fullmatch(text):
                warnings.append(f"unterminated {kind} literal at offset {match.start()}")
            tokens.append(_escape_literal(text))
            continue
        tokens.append(text)
    for warning in warnings:
        logger.warning("lex-warning %s", warning)
    return TokenSeq(tuple(tokens), "code", tuple(warnings))


def tokenize_comment(raw: str) -> TokenSeq:
    """Split a method comment into words.

    Javadoc furniture (``/**``, ``*/``, leading ``*``) is removed and each word
    loses leading/trailing punctuation; ``@``-tags such as ``@param`` are kept
    whole. Letter case is preserved.
    """
    if not raw:
        return TokenSeq((), "comment")
    text = _JAVADOC_FURNITURE.sub(" ", raw)
    text = _LEADING_STAR.sub(" ", text)
    words: List[str] = []
    for word in text.split():
        if word.startswith("@") and len(word) > 1:
            words.append(word)
            continue
        stripped = word.strip(_PUNCT)
        if stripped:
            words.append(stripped)
    return TokenSeq(tuple(words), "comment")


def split_subtokens(identifier: str) -> List[str]:
    """Split at camelCase, underscore and digit boundaries; lowercase the parts.

    >>> split_subtokens("findMetaAnnotationsRecursive")
    ['find', 'meta', 'annotations', 'recursive']
    """
    return [part.lower() for part in _SUBTOKEN_RE.findall(identifier or "")]


def code_vocabulary(raw_code: str) -> frozenset:
    """Lowercased code tokens plus every identifier subtoken."""
    vocab = set()
    for tok in tokenize_code(raw_code).tokens:
        vocab.add(tok.lower())
        vocab.update(split_subtokens(tok))
    return frozenset(vocab)
