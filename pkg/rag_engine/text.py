"""Tokenization and feature hashing shared by the retriever and the generator.

Identical text yields identical features on every platform: tokens are split
on Unicode whitespace, lowercased per character and stripped of edge
punctuation; features are FNV-1a 64 hashes taken modulo the feature dimension.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# [\W_] is "neither letter nor digit" under Python's Unicode \w
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")
# Unicode White_Space only; str.split() also breaks on U+001C..U+001F
_WHITESPACE = re.compile("[\t\n\x0b\x0c\r \x85\xa0\u1680\u2000-\u200a\u2028\u2029\u202f\u205f\u3000]+")


def _simple_lower(piece: str) -> str:
    if piece.isascii():
        return piece.lower()
    out = []
    for ch in piece:
        low = ch.lower()
        # full case mapping can expand a character (U+0130); keep the simple mapping
        out.append(low if len(low) == 1 else low[0])
    return "".join(out)


def tokenize(text: str) -> List[str]:
    tokens: List[str] = []
    for piece in _WHITESPACE.split(text):
        piece = _EDGE_PUNCT.sub("", _simple_lower(piece))
        if piece:
            tokens.append(piece)
    return tokens


@lru_cache(maxsize=1 << 16)
def hash64(data: bytes) -> int:
    """FNV-1a, 64 bit."""
    h = FNV_OFFSET_BASIS
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


def feature_index(key: str, dim: int) -> int:
    return hash64(key.encode("utf-8")) % dim


@dataclass(frozen=True)
class SparseFeatureVector:
    """Feature counts keyed by index in [0, dim); absent indices are zero."""
    dim: int
    entries: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("feature dimension must be positive")
        for idx, count in self.entries.items():
            if not 0 <= idx < self.dim:
                raise ValueError(f"feature index {idx} outside [0, {self.dim})")
            if count <= 0:
                raise ValueError(f"feature count at {idx} must be positive")

    def __len__(self) -> int:
        return len(self.entries)

    def total(self) -> float:
        return float(sum(self.entries.values()))

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """(indices ascending as int64, counts as float64)."""
        idx = sorted(self.entries)
        return (
            np.asarray(idx, dtype=np.int64),
            np.asarray([self.entries[i] for i in idx], dtype=np.float64),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        for i, c in self.entries.items():
            out[i] = c
        return out

    def plus(self, extra: Iterable[int]) -> "SparseFeatureVector":
        """Copy with +1 at each index in extra."""
        merged: Dict[int, float] = dict(self.entries)
        for i in extra:
            merged[i] = merged.get(i, 0.0) + 1.0
        return SparseFeatureVector(self.dim, merged)


def bow_features(tokens: Sequence[str], dim: int) -> SparseFeatureVector:
    if dim <= 0:
        raise ValueError("feature dimension must be positive")
    counts = Counter(feature_index(t, dim) for t in tokens)
    return SparseFeatureVector(dim, {i: float(c) for i, c in counts.items()})
