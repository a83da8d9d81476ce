"""Exception types shared across the package.

Every validation failure raises a subclass of PromptRetrievalError so the
CLI can map them to exit code 1 uniformly.
"""

from __future__ import annotations


class PromptRetrievalError(Exception):
    """Base class for all package errors."""


class ParseError(PromptRetrievalError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateIdError(PromptRetrievalError):
    pass


class DimensionMismatchError(PromptRetrievalError):
    pass


class EmptySetError(PromptRetrievalError):
    pass


class ZeroVectorError(PromptRetrievalError):
    pass


class UnknownQueryError(PromptRetrievalError):
    pass


class NoCandidatesError(PromptRetrievalError):
    pass


class UnknownIdError(PromptRetrievalError):
    pass


class BadMagicError(PromptRetrievalError):
    pass


class ShapeMismatchError(PromptRetrievalError):
    pass


class SidecarMismatchError(PromptRetrievalError):
    pass


class EmptyRowError(PromptRetrievalError):
    pass


class MissingSetsError(PromptRetrievalError):
    pass


class NonFiniteLossError(PromptRetrievalError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class InvalidParamsError(PromptRetrievalError):
    pass


class UsageError(PromptRetrievalError):
    pass
