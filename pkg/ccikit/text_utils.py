"""Text helpers shared by the corpus, prompt and fixer code.

Normalization here is comparison-only: callers keep the original field values
and normalize on the fly when grouping or matching.
"""

import re

_CONTROL_WS = re.compile(r"[\t\r\n]")
_SPACE_RUN = re.compile(r"\s+")
_FENCE = re.compile(r"```[A-Za-z0-9_+-]*\n?(.*?)```", re.DOTALL)
_JAVADOC_BLOCK = re.compile(r"/\*.*?\*/", re.DOTALL)


def normalize_text(raw: str) -> str:
    """Collapse tabs, newlines and whitespace runs to single spaces and trim.

    Control whitespace becomes a space rather than being deleted, so
    ``"foo\\tbar"`` normalizes to ``"foo bar"`` and never to ``"foobar"``.

    Examples:
        >>> normalize_text("foo\\tbar\\n")
        'foo bar'
        >>> normalize_text("  a   b ")
        'a b'
    """
    if not raw:
        return ""
    text = _CONTROL_WS.sub(" ", raw)
    text = _SPACE_RUN.sub(" ", text)
    return text.strip()


def strip_code_fences(text: str) -> str:
    """Return the body of the first fenced block, or the text itself if unfenced."""
    if not text:
        return ""
    match = _FENCE.search(text)
    if match:
        return match.group(1).strip()
    return text.strip()


def first_comment_block(text: str) -> str:
    """Reduce a model completion to a single comment.

    Fences are stripped first. A ``/* ... */`` block wins if present; otherwise
    the text up to the first blank line is kept.
    """
    body = strip_code_fences(text)
    if not body:
        return ""
    block = _JAVADOC_BLOCK.search(body)
    if block:
        return block.group(0).strip()
    paragraphs = re.split(r"\n\s*\n", body, maxsplit=1)
    return paragraphs[0].strip()
