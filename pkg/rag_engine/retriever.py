from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import DimensionMismatch
from .rng import SplitMix64
from .text import SparseFeatureVector, bow_features, tokenize

QUERY_TENSOR = "retriever.query.W"
CONTEXT_TENSOR = "retriever.context.W"


class HasChunkText(Protocol):
    title: str
    section: str
    text: str


@dataclass
class LinearEncoder:
    """d x F weight matrix applied to hashed bag-of-words features."""
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:
            raise ValueError("encoder weights must be a d x F matrix")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("encoder weights must be finite")

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def features(self) -> int:
        return int(self.weights.shape[1])

    def encode_features(self, phi: SparseFeatureVector) -> np.ndarray:
        if phi.dim != self.features:
            raise DimensionMismatch(self.features, phi.dim, "feature vector")
        idx, counts = phi.arrays()
        if idx.size == 0:
            return np.zeros(self.dim, dtype=np.float64)
        return self.weights[:, idx].astype(np.float64) @ counts

    def encode_text(self, text: str) -> np.ndarray:
        return self.encode_features(bow_features(tokenize(text), self.features))


@dataclass
class RetrieverModel:
    query_encoder: LinearEncoder
    context_encoder: LinearEncoder

    def __post_init__(self) -> None:
        q, c = self.query_encoder.weights.shape, self.context_encoder.weights.shape
        if q != c:
            raise ValueError(f"query encoder {q} and context encoder {c} must share d and F")

    @property
    def dim(self) -> int:
        return self.query_encoder.dim

    @property
    def features(self) -> int:
        return self.query_encoder.features


def chunk_text(chunk: HasChunkText) -> str:
    return f"{chunk.title} {chunk.section} {chunk.text}"


def query_features(model: RetrieverModel, text: str) -> SparseFeatureVector:
    return bow_features(tokenize(text), model.features)


def encode_query(model: RetrieverModel, text: str) -> np.ndarray:
    return model.query_encoder.encode_text(text)


def encode_context(model: RetrieverModel, chunk: HasChunkText) -> np.ndarray:
    return model.context_encoder.encode_text(chunk_text(chunk))


def score(query_embedding: np.ndarray, context_embedding: np.ndarray) -> float:
    """Inner product, reduced the same way the knowledge store reduces its rows."""
    q = np.asarray(query_embedding, dtype=np.float64)
    c = np.asarray(context_embedding, dtype=np.float64)
    if q.shape != c.shape:
        raise DimensionMismatch(int(q.shape[-1]), int(c.shape[-1]), "context embedding")
    return float(np.sum(q * c))


def init_retriever(dim: int, features: int, seed: int, *, dtype: type = np.float32) -> RetrieverModel:
    """Uniform weights in [-1/sqrt(F), 1/sqrt(F)]; query encoder drawn first, row-major."""
    if dim <= 0 or features <= 0:
        raise ValueError("dim and features must be positive")
    rng = SplitMix64(seed)
    bound = 1.0 / math.sqrt(features)
    n = dim * features
    q = rng.uniform_array(n, bound, label="retriever.query").reshape(dim, features)
    c = rng.uniform_array(n, bound, label="retriever.context").reshape(dim, features)
    return RetrieverModel(
        query_encoder=LinearEncoder(q.astype(dtype)),
        context_encoder=LinearEncoder(c.astype(dtype)),
    )


def overlap_retriever(features: int, *, dtype: type = np.float32) -> RetrieverModel:
    """Both encoders the F x F identity: scores are hashed token-overlap counts."""
    eye = np.eye(features, dtype=dtype)
    return RetrieverModel(query_encoder=LinearEncoder(eye.copy()), context_encoder=LinearEncoder(eye))
