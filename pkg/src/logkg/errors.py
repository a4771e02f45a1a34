"""Exception hierarchy shared across the package."""

from __future__ import annotations


class LogKGError(Exception):
    """Base class for all package errors."""


# ontology
class DescriptorParseError(LogKGError):
    pass


class SchemaInconsistency(LogKGError):
    pass


class UnknownClass(LogKGError):
    pass


# kg
class SyntacticError(LogKGError):
    """Raised when a model payload cannot be parsed into a graph.

    ``reason`` is fed back to the model verbatim during correction.
    """

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


# retrieval
class ProviderUnavailable(LogKGError):
    pass


class DimensionMismatch(LogKGError):
    pass


class EmptyIndex(LogKGError):
    pass


class StorageError(LogKGError):
    pass


class NotFound(StorageError):
    pass


# llm
class BackendError(LogKGError):
    pass


class BackendTimeout(BackendError):
    pass


class BackendHTTPError(BackendError):
    def __init__(self, status: int, body: str = "") -> None:
        super().__init__(f"backend returned HTTP {status}")
        self.status = status
        self.body = body


class NoToolCall(BackendError):
    """The model answered without invoking the output tool."""

    def __init__(self, content: str = "") -> None:
        super().__init__("model answered without calling the output tool")
        self.content = content


# validation / eval
class EmptyInput(LogKGError):
    pass


class AlignmentError(LogKGError):
    pass


class DiversityExhausted(LogKGError):
    pass


class ScoreParseError(LogKGError):
    pass


class ConfigError(LogKGError):
    pass
