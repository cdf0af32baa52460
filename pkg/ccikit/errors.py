"""Exception hierarchy shared by every pipeline stage.

The CLI maps each family onto an exit code: usage problems exit 1, bad data
exits 2 and LLM backend failures exit 3.
"""

from typing import Optional


class CciError(Exception):
    exit_code = 1


class UsageError(CciError):
    exit_code = 1


class ConfigError(UsageError):
    pass


class DataError(CciError, ValueError):
    exit_code = 2


class ShapeError(DataError):
    pass


class BackendError(CciError):
    exit_code = 3


class RetryExhaustedError(BackendError):
    def __init__(self, endpoint: str, attempts: int, last_error: Optional[BaseException] = None) -> None:
        self.endpoint = endpoint
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"endpoint={endpoint} failed after {attempts} attempt(s): {last_error}")


class HttpStatusError(BackendError):
    def __init__(self, endpoint: str, status: int, body: str = "") -> None:
        self.endpoint = endpoint
        self.status = status
        super().__init__(f"endpoint={endpoint} returned HTTP {status}: {body[:200]}")


class EmptyCompletionError(BackendError):
    pass


class ReplayMissError(BackendError):
    pass
