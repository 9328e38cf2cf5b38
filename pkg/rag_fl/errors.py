"""Federated-run errors; all share the engine's RagEngineError root."""

from __future__ import annotations

from rag_engine.errors import FrameTooLarge, MalformedFrame, RagEngineError, ShapeMismatch

__all__ = [
    "BindError",
    "ClientDropped",
    "FrameTooLarge",
    "MalformedFrame",
    "ProtocolError",
    "RemoteAbort",
    "ShapeMismatch",
    "ZeroExamples",
    "error_code",
]


class ZeroExamples(RagEngineError, ValueError):
    """Every client in a round reported num_examples = 0."""


class ClientDropped(RagEngineError, ConnectionError):
    """A client connection was lost or failed mid-session."""


class ProtocolError(RagEngineError, RuntimeError):
    """Unexpected message type or round number."""


class BindError(RagEngineError, OSError):
    """The server could not listen on the requested address."""


class RemoteAbort(RagEngineError, RuntimeError):
    """The peer sent an ERROR frame."""

    def __init__(self, code: str, detail: str) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


_CODES = {
    ClientDropped: "client_dropped",
    ZeroExamples: "zero_examples",
    ShapeMismatch: "shape_mismatch",
    ProtocolError: "protocol_error",
}


def error_code(exc: BaseException) -> str:
    """Wire code carried by the ERROR frame for an abort caused by exc."""
    for kind, code in _CODES.items():
        if isinstance(exc, kind):
            return code
    return "aborted"
