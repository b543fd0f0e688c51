"""
Error types for sslcal.

Every failure carries a context dict so the CLI can emit it as one
machine-readable JSON line (see cli/main.py). The ValueError mix-ins keep
the usual `except ValueError` working for callers that only care about
bad input.
"""

from __future__ import annotations

from typing import Any


class SslLabError(Exception):
    """Base class for all sslcal failures."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


class ConfigError(SslLabError, ValueError):
    """Invalid configuration value or hyperparameter."""


class ShapeError(SslLabError, ValueError):
    """Array shape, dimension or class-count mismatch."""


class NumericError(SslLabError, ValueError):
    """Non-finite or empty numeric input."""


class DivergenceError(SslLabError):
    """Training produced a non-finite loss or exploding logits."""


class ReportError(SslLabError):
    """Reading or writing a report, config or checkpoint file failed."""

    def __init__(self, message: str, path: str, **context: Any):
        super().__init__(f"{message}: {path}", path=path, **context)
        self.path = path


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)
