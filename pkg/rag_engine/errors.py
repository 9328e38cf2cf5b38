"""Exception types raised by the RAG engine.

Every error derives from RagEngineError and from the closest builtin, so
callers can catch either the domain type or e.g. ValueError.
"""

from __future__ import annotations


class RagEngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(RagEngineError, ValueError):
    """A configuration record violates its invariants."""


class DimensionMismatch(RagEngineError, ValueError):
    def __init__(self, expected: int, got: int, what: str = "vector") -> None:
        super().__init__(f"{what} has dimension {got}, expected {expected}")
        self.expected = expected
        self.got = got


class DuplicateId(RagEngineError, ValueError):
    def __init__(self, chunk_id: str) -> None:
        super().__init__(f"duplicate chunk id {chunk_id!r}")
        self.chunk_id = chunk_id


class FormatError(RagEngineError, ValueError):
    """A persisted store or checkpoint is missing, corrupt, or from another version."""


class SchemaError(RagEngineError, ValueError):
    """A JSONL record does not match its schema. Carries the 1-based line number."""

    def __init__(self, path: str, line: int, detail: str) -> None:
        super().__init__(f"{path}:{line}: {detail}")
        self.path = path
        self.line = line
        self.detail = detail


class TemplateError(RagEngineError, ValueError):
    """Prompt template lacks a placeholder or repeats one."""


class DegenerateRetrieval(RagEngineError, ValueError):
    """Fewer than two chunks retrieved, so no distribution over chunks exists."""


class MissingTrainer(RagEngineError, LookupError):
    """The trainer manager has no trainer for the requested mode."""


class FreezeViolation(RagEngineError, RuntimeError):
    """Training changed the parameters of the model that should stay frozen."""


class InsufficientExamples(RagEngineError, ValueError):
    """Asked for more few-shot examples than the pool holds."""


class FrameTooLarge(RagEngineError, ValueError):
    """Frame payload exceeds the 256 MiB limit."""


class MalformedFrame(RagEngineError, ValueError):
    """Frame bytes are truncated, mis-sized, or not a valid JSON message."""


class ShapeMismatch(RagEngineError, ValueError):
    """Tensor names or shapes disagree between two parameter sets."""
