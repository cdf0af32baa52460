import logging
import os
import threading
from typing import Any, Iterable, Optional

import orjson
from pydantic import BaseModel

logger = logging.getLogger(__name__)

_JSON_DOC_OPTS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    return obj


def _default(obj: Any) -> Any:
    # nested models inside plain dicts
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class JsonlWriter:
    """Write JSON Lines to ``path`` via a ``.partial`` file.

    While writing, an ``.inprogress`` marker sits next to the target. ``close``
    renames the partial file onto the target and removes the marker, so a
    reader never sees a half-written output.
    """

    def __init__(self, path: str, *, use_marker: bool = True) -> None:
        self.path = path
        self.use_marker = use_marker
        self._partial_path = f"{path}.partial"
        self._marker_path = f"{path}.inprogress"
        self._lines_written = 0

        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        if self.use_marker:
            try:
                open(self._marker_path, "wb").close()
            except Exception:
                logger.exception("file-marker-put-failed path=%s", self._marker_path)
        self._file = open(self._partial_path, "wb")
        logger.debug("jsonl-open path=%s", self.path)

    def write(self, record: Any) -> None:
        data = orjson.dumps(_to_jsonable(record), default=_default, option=orjson.OPT_SERIALIZE_NUMPY) + b"\n"
        self._file.write(data)
        self._lines_written += 1

    def write_all(self, records: Iterable[Any]) -> int:
        for record in records:
            self.write(record)
        return self._lines_written

    def close(self) -> None:
        if self._file is None:
            return
        try:
            try:
                self._file.flush()
                self._file.close()
                os.replace(self._partial_path, self.path)
            except Exception:
                logger.exception("file-finalize-failed path=%s", self.path)
                raise
        finally:
            if self.use_marker:
                try:
                    if os.path.exists(self._marker_path):
                        os.remove(self._marker_path)
                except Exception:
                    logger.exception("file-marker-delete-failed marker=%s", self._marker_path)
            self._file = None
            logger.debug("jsonl-closed path=%s lines=%d", self.path, self._lines_written)

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


class TranscriptWriter:
    """Append-only JSON Lines log shared by concurrent callers."""

    def __init__(self, path: Optional[str]) -> None:
        self.path = path
        self._lock = threading.Lock()
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    def append(self, entry: dict) -> None:
        if not self.path:
            return
        line = orjson.dumps(entry) + b"\n"
        with self._lock:
            with open(self.path, "ab") as fh:
                fh.write(line)


def write_json(path: str, document: Any) -> None:
    """Write one JSON document with sorted keys so equal inputs give equal bytes.

    The document lands in ``<path>.partial`` first and is renamed onto
    ``path``, so an interrupted write leaves the previous file intact.
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    data = orjson.dumps(_to_jsonable(document), default=_default, option=_JSON_DOC_OPTS) + b"\n"
    partial = f"{path}.partial"
    try:
        with open(partial, "wb") as fh:
            fh.write(data)
        os.replace(partial, path)
    except OSError:
        logger.exception("file-finalize-failed path=%s", path)
        if os.path.exists(partial):
            os.remove(partial)
        raise


def read_json(path: str) -> Any:
    with open(path, "rb") as fh:
        return orjson.loads(fh.read())
