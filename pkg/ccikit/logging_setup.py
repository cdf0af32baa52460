import logging
import os
from typing import Literal, Optional

import orjson

# httpx logs every request at INFO; the gateway transcript already records them
_CHATTY_LOGGERS = ("httpx", "httpcore", "botocore", "boto3", "urllib3")


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "time": self.formatTime(record, "%Y-%m-%dT%H:%M:%S%z"),
        }
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return orjson.dumps(payload).decode()


def setup_logging(
    level: Optional[str] = None,
    log_format: Optional[Literal["text", "json"]] = None,
    log_file: Optional[str] = None,
) -> None:
    """Route every record to stderr, plus ``log_file`` (or ``LOG_FILE``) if given.

    stdout stays free for the ``metric`` subcommand's JSON.
    """
    lvl = (level or os.getenv("LOG_LEVEL") or "INFO").upper()
    fmt = (log_format or os.getenv("LOG_FORMAT") or "text").lower()
    log_file = log_file or os.getenv("LOG_FILE")

    formatter = (
        JsonFormatter() if fmt == "json" else logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    )
    handlers = [logging.StreamHandler()]
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))

    for h in logging.root.handlers:
        if isinstance(h, logging.FileHandler):
            h.close()
    logging.root.handlers.clear()
    logging.root.setLevel(lvl)
    for h in handlers:
        h.setFormatter(formatter)
        logging.root.addHandler(h)

    quiet = logging.DEBUG if lvl == "DEBUG" else logging.WARNING
    for name in _CHATTY_LOGGERS:
        logging.getLogger(name).setLevel(quiet)
