from __future__ import annotations

from typing import Any


class InvalidInputError(ValueError):
    """Numeric input that violates a precondition (non-finite, wrong length, out of bounds)."""


class ConfigError(ValueError):
    """Configuration that cannot describe a valid run."""


class UndefinedTestError(ValueError):
    """A statistical test has no defined value for the given data."""


class TransportError(RuntimeError):
    """The external SUT process died, timed out or closed its pipes."""


class ProtocolError(TransportError):
    """The external SUT process answered with a malformed record."""


class SearchAborted(RuntimeError):
    """The SUT failed mid-run; the partial archive and trace are kept for inspection."""

    def __init__(self, message: str, archive: Any, trace: Any):
        super().__init__(message)
        self.archive = archive
        self.trace = trace
