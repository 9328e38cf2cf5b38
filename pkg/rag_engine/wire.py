"""Length-prefixed JSON frames and the float32 tensor payload.

A frame is a 4-byte big-endian unsigned payload length followed by a UTF-8
JSON object. Tensor values travel as base64 of little-endian float32 bytes,
which keeps files text-inspectable while staying bit-exact.
"""

from __future__ import annotations

import base64
import binascii
import json
import struct
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from .errors import FrameTooLarge, MalformedFrame

HEADER = struct.Struct(">I")
HEADER_SIZE = HEADER.size
MAX_FRAME_BYTES = 256 * 1024 * 1024

_F32_LE = np.dtype("<f4")


def encode_f32(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype=_F32_LE).tobytes()).decode("ascii")


def decode_f32(text: str, shape: Sequence[int]) -> np.ndarray:
    """Inverse of encode_f32; raises ValueError when the byte count disagrees with shape."""
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError, AttributeError) as e:
        raise ValueError(f"invalid base64 tensor data: {e}") from e
    expected = int(np.prod(shape, dtype=np.int64)) * _F32_LE.itemsize
    if len(raw) != expected:
        raise ValueError(f"tensor data holds {len(raw)} bytes, shape needs {expected}")
    return np.frombuffer(raw, dtype=_F32_LE).astype(np.float32).reshape(tuple(shape))


def pack_frame(payload: Dict[str, Any]) -> bytes:
    body = json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame payload of {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return HEADER.pack(len(body)) + body


def frame_length(header: bytes) -> int:
    if len(header) != HEADER_SIZE:
        raise MalformedFrame(f"frame header needs {HEADER_SIZE} bytes, got {len(header)}")
    (n,) = HEADER.unpack(header)
    if n > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame announces {n} bytes, limit is {MAX_FRAME_BYTES}")
    return n


def parse_payload(body: bytes) -> Dict[str, Any]:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedFrame(f"frame payload is not UTF-8 JSON: {e}") from e
    if not isinstance(obj, dict):
        raise MalformedFrame("frame payload must be a JSON object")
    return obj


def unpack_frame(data: bytes) -> Dict[str, Any]:
    """Decode exactly one complete frame."""
    if len(data) < HEADER_SIZE:
        raise MalformedFrame("truncated frame header")
    n = frame_length(data[:HEADER_SIZE])
    if len(data) - HEADER_SIZE != n:
        raise MalformedFrame(f"frame announces {n} payload bytes, holds {len(data) - HEADER_SIZE}")
    return parse_payload(data[HEADER_SIZE:])


def tensor_to_json(name: str, values: np.ndarray) -> Dict[str, Any]:
    return {"name": name, "shape": list(values.shape), "data": encode_f32(values)}


def tensor_from_json(raw: Dict[str, Any]) -> Tuple[str, np.ndarray]:
    name = raw["name"]
    shape = [int(s) for s in raw["shape"]]
    if not isinstance(name, str) or any(s < 0 for s in shape):
        raise ValueError("tensor needs a string name and a non-negative shape")
    return name, decode_f32(raw["data"], shape)
