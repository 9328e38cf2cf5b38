"""FL messages on the wire: one typed JSON object per length-prefixed frame.

Payloads:

- ``{"type": "join", "client_id": str}``
- ``{"type": "params", "round": int, "tensors": [...]}``
- ``{"type": "update", "round": int, "tensors": [...], "num_examples": int}``
- ``{"type": "done", "tensors": [...]}``
- ``{"type": "error", "code": str, "detail": str}``
"""

from __future__ import annotations

import asyncio
import socket
from typing import Any, Dict

from rag_engine.errors import MalformedFrame
from rag_engine.params import ModelParameters
from rag_engine.wire import HEADER_SIZE, frame_length, pack_frame, parse_payload, unpack_frame

from .models import DoneMessage, ErrorMessage, FLMessage, JoinMessage, ParamsMessage, UpdateMessage


def message_to_payload(msg: FLMessage) -> Dict[str, Any]:
    if isinstance(msg, JoinMessage):
        return {"type": "join", "client_id": msg.client_id}
    if isinstance(msg, ParamsMessage):
        return {"type": "params", "round": msg.round, "tensors": msg.params.to_json()}
    if isinstance(msg, UpdateMessage):
        return {
            "type": "update",
            "round": msg.round,
            "tensors": msg.params.to_json(),
            "num_examples": msg.num_examples,
        }
    if isinstance(msg, DoneMessage):
        return {"type": "done", "tensors": msg.params.to_json()}
    if isinstance(msg, ErrorMessage):
        return {"type": "error", "code": msg.code, "detail": msg.detail}
    raise TypeError(f"not an FL message: {type(msg).__name__}")


def _int(payload: Dict[str, Any], key: str) -> int:
    value = payload[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedFrame(f"{key!r} must be an integer")
    return value


def _str(payload: Dict[str, Any], key: str) -> str:
    value = payload[key]
    if not isinstance(value, str):
        raise MalformedFrame(f"{key!r} must be a string")
    return value


def _tensors(payload: Dict[str, Any]) -> ModelParameters:
    raw = payload["tensors"]
    if not isinstance(raw, list):
        raise MalformedFrame("'tensors' must be a list")
    try:
        return ModelParameters.from_json(raw)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFrame(f"bad tensor payload: {e}") from e


def payload_to_message(payload: Dict[str, Any]) -> FLMessage:
    kind = payload.get("type")
    try:
        if kind == "join":
            return JoinMessage(client_id=_str(payload, "client_id"))
        if kind == "params":
            return ParamsMessage(round=_int(payload, "round"), params=_tensors(payload))
        if kind == "update":
            return UpdateMessage(
                round=_int(payload, "round"),
                params=_tensors(payload),
                num_examples=_int(payload, "num_examples"),
            )
        if kind == "done":
            return DoneMessage(params=_tensors(payload))
        if kind == "error":
            return ErrorMessage(code=_str(payload, "code"), detail=_str(payload, "detail"))
    except KeyError as e:
        raise MalformedFrame(f"{kind} message lacks field {e}") from e
    raise MalformedFrame(f"unknown message type {kind!r}")


def encode_frame(msg: FLMessage) -> bytes:
    return pack_frame(message_to_payload(msg))


def decode_frame(data: bytes) -> FLMessage:
    return payload_to_message(unpack_frame(data))


def _recv_exactly(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        part = sock.recv(min(n - got, 1 << 20))
        if not part:
            raise ConnectionError(f"peer closed the connection ({got} of {n} bytes read)")
        chunks.append(part)
        got += len(part)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> FLMessage:
    n = frame_length(_recv_exactly(sock, HEADER_SIZE))
    return payload_to_message(parse_payload(_recv_exactly(sock, n)))


def send_message(sock: socket.socket, msg: FLMessage) -> None:
    sock.sendall(encode_frame(msg))


async def read_message_async(reader: asyncio.StreamReader) -> FLMessage:
    try:
        header = await reader.readexactly(HEADER_SIZE)
        body = await reader.readexactly(frame_length(header))
    except asyncio.IncompleteReadError as e:
        raise ConnectionError(f"peer closed the connection ({len(e.partial)} bytes of a frame read)") from e
    return payload_to_message(parse_payload(body))


async def write_message_async(writer: asyncio.StreamWriter, msg: FLMessage) -> None:
    writer.write(encode_frame(msg))
    await writer.drain()
