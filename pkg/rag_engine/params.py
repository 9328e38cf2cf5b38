"""Named float32 tensors: the unit trainers, checkpoints and federated rounds exchange.

Tensor names:

- ``retriever.context.W`` / ``retriever.query.W``: d x F encoder weights
- ``generator.W``: |V| x F generator weights
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from .engine import RAGSystem
from .errors import FormatError, MalformedFrame, ShapeMismatch
from .generator import GENERATOR_TENSOR, LogLinearLM, load_vocab, save_vocab
from .retriever import CONTEXT_TENSOR, QUERY_TENSOR, LinearEncoder, RetrieverModel
from .wire import pack_frame, tensor_from_json, tensor_to_json, unpack_frame

PARAMS_FILE = "params.bin"
VOCAB_FILE = "vocab.json"

ROLE_TENSORS: Dict[str, Tuple[str, ...]] = {
    "retriever": (CONTEXT_TENSOR, QUERY_TENSOR),
    "generator": (GENERATOR_TENSOR,),
}


@dataclass(frozen=True)
class ModelParameters:
    """Ordered map name -> float32 tensor, ordered lexicographically by name."""
    tensors: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        ordered = {}
        for name in sorted(self.tensors):
            ordered[name] = np.ascontiguousarray(self.tensors[name], dtype=np.float32)
        object.__setattr__(self, "tensors", ordered)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelParameters):
            return NotImplemented
        return self.bit_equal(other)

    def names(self) -> List[str]:
        return list(self.tensors)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {n: tuple(t.shape) for n, t in self.tensors.items()}

    def checksum(self) -> str:
        """sha256 over names, shapes and raw little-endian bytes."""
        h = hashlib.sha256()
        for name, t in self.tensors.items():
            h.update(name.encode("utf-8"))
            h.update(repr(tuple(t.shape)).encode("ascii"))
            h.update(t.astype("<f4").tobytes())
        return h.hexdigest()

    def l2_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(t.astype(np.float64) ** 2)) for t in self.tensors.values()))

    def bit_equal(self, other: "ModelParameters") -> bool:
        return self.shapes() == other.shapes() and all(
            np.array_equal(self[n].view(np.uint32), other[n].view(np.uint32)) for n in self
        )

    def to_json(self) -> List[dict]:
        return [tensor_to_json(n, t) for n, t in self.tensors.items()]

    @staticmethod
    def from_json(raw: List[dict]) -> "ModelParameters":
        tensors: Dict[str, np.ndarray] = {}
        for item in raw:
            name, values = tensor_from_json(item)
            if name in tensors:
                raise ValueError(f"duplicate tensor name {name!r}")
            tensors[name] = values
        return ModelParameters(tensors)


def extract_parameters(system: RAGSystem, role: str) -> ModelParameters:
    """Copy of the tensors a role trains."""
    if role == "retriever":
        r = system.retriever
        return ModelParameters({
            CONTEXT_TENSOR: r.context_encoder.weights.copy(),
            QUERY_TENSOR: r.query_encoder.weights.copy(),
        })
    if role == "generator":
        return ModelParameters({GENERATOR_TENSOR: system.generator.weights.copy()})
    raise ValueError(f"unknown model role {role!r}")


def system_parameters(system: RAGSystem) -> ModelParameters:
    merged: Dict[str, np.ndarray] = {}
    for role in ROLE_TENSORS:
        merged.update(extract_parameters(system, role).tensors)
    return ModelParameters(merged)


def _assign(target: np.ndarray, values: np.ndarray, name: str) -> None:
    if target.shape != values.shape:
        raise ShapeMismatch(f"{name}: shape {values.shape} does not match model {target.shape}")
    target[...] = values.astype(target.dtype)


def load_parameters(system: RAGSystem, role: str, params: ModelParameters) -> None:
    """Write a role's tensors into the live models in place."""
    expected = set(ROLE_TENSORS[role]) if role in ROLE_TENSORS else None
    if expected is None:
        raise ValueError(f"unknown model role {role!r}")
    if set(params.names()) != expected:
        raise ShapeMismatch(f"{role} parameters need tensors {sorted(expected)}, got {params.names()}")
    if role == "retriever":
        _assign(system.retriever.context_encoder.weights, params[CONTEXT_TENSOR], CONTEXT_TENSOR)
        _assign(system.retriever.query_encoder.weights, params[QUERY_TENSOR], QUERY_TENSOR)
    else:
        _assign(system.generator.weights, params[GENERATOR_TENSOR], GENERATOR_TENSOR)


def encode_params_file(params: ModelParameters) -> bytes:
    """A PARAMS-style frame with round 0."""
    return pack_frame({"type": "params", "round": 0, "tensors": params.to_json()})


def save_params_file(path: str | Path, params: ModelParameters) -> None:
    Path(path).write_bytes(encode_params_file(params))


def load_params_file(path: str | Path) -> ModelParameters:
    data = Path(path).read_bytes()
    try:
        payload = unpack_frame(data)
    except MalformedFrame as e:
        raise FormatError(f"{path}: unreadable parameters ({e})") from e
    if payload.get("type") != "params":
        raise FormatError(f"{path}: expected a params payload")
    try:
        return ModelParameters.from_json(payload["tensors"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: unreadable parameters ({e})") from e


def save_checkpoint(directory: str | Path, system: RAGSystem) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_params_file(out / PARAMS_FILE, system_parameters(system))
    save_vocab(out / VOCAB_FILE, system.generator.vocab)


def load_models(directory: str | Path) -> Tuple[RetrieverModel, LogLinearLM]:
    """Rebuild retriever and generator from params.bin + vocab.json."""
    src = Path(directory)
    params = load_params_file(src / PARAMS_FILE)
    vocab = load_vocab(src / VOCAB_FILE)
    missing = [n for names in ROLE_TENSORS.values() for n in names if n not in params.tensors]
    if missing:
        raise FormatError(f"{src / PARAMS_FILE}: missing tensors {missing}")
    retriever = RetrieverModel(
        query_encoder=LinearEncoder(params[QUERY_TENSOR].copy()),
        context_encoder=LinearEncoder(params[CONTEXT_TENSOR].copy()),
    )
    return retriever, LogLinearLM(vocab=vocab, weights=params[GENERATOR_TENSOR].copy())
