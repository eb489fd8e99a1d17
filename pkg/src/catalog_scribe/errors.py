"""Exception hierarchy; the CLI maps these onto stable exit codes."""

from __future__ import annotations


class CatalogScribeError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CatalogScribeError):
    """Bad user input: unreadable files, malformed records, config mistakes."""


class SnapshotError(InputError):
    """A persisted snapshot is corrupt or carries an unsupported version."""


class ProviderError(CatalogScribeError):
    """A remote embedding/chat provider failed after exhausting retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class ProtocolError(ProviderError):
    """A provider answered, but the response did not match the wire contract."""
