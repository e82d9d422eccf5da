"""Exception types raised across the pipeline."""

from __future__ import annotations


class SpvrError(Exception):
    """Base class for all pipeline errors."""


class ParseFailure(SpvrError, ValueError):
    pass


class UnknownKind(SpvrError, KeyError):
    pass


class SpanOutOfRange(SpvrError, IndexError):
    pass


class EmptyEdits(SpvrError, ValueError):
    pass


class UnsupportedMetType(SpvrError, ValueError):
    pass


class UnknownCwe(SpvrError, KeyError):
    pass


class EndpointError(SpvrError, RuntimeError):
    pass


class AuthError(EndpointError):
    pass


class UnmatchedPrompt(SpvrError, LookupError):
    pass


class EmptyReference(SpvrError, ValueError):
    pass


class EmptyTree(SpvrError, ValueError):
    pass


class ShapeMismatch(SpvrError, ValueError):
    pass


class MalformedRecord(SpvrError, ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class MissingTruth(SpvrError, LookupError):
    pass


class ConfigError(SpvrError, ValueError):
    pass
