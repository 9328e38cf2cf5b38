"""In-memory knowledge store with exact top-k retrieval and directory persistence.

On disk a store is a directory holding:

- ``meta.json``: ``{"format": "rag-engine-store", "version": 1, "dim": d, "count": n}``
- ``chunks.jsonl``: one chunk per line, embedding as base64 little-endian float32
"""

from __future__ import annotations

import heapq
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateId, FormatError
from .models import KnowledgeChunk, RetrievalResult
from .wire import decode_f32, encode_f32

logger = logging.getLogger(__name__)

STORE_FORMAT = "rag-engine-store"
STORE_VERSION = 1
META_FILE = "meta.json"
CHUNKS_FILE = "chunks.jsonl"


def inner_product_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Row-wise dot products, reduced per row so equal rows score bit-identically."""
    return np.sum(matrix * query, axis=1)


class KnowledgeStore:
    """Embedded chunks of a fixed dimension, searched by full scan.

    Many readers may call top_k concurrently; add_chunks needs exclusive access.
    """

    def __init__(self, dim: int) -> None:
        if int(dim) <= 0:
            raise ValueError("store dimension must be positive")
        self.dim = int(dim)
        self._chunks: Dict[str, KnowledgeChunk] = {}
        self._order: List[str] = []
        self._matrix: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, chunk_id: object) -> bool:
        return chunk_id in self._chunks

    def __iter__(self) -> Iterator[KnowledgeChunk]:
        return (self._chunks[i] for i in self._order)

    def ids(self) -> List[str]:
        return list(self._order)

    def get(self, chunk_id: str) -> KnowledgeChunk:
        return self._chunks[chunk_id]

    def add_chunks(self, chunks: Sequence[KnowledgeChunk]) -> int:
        """Add all chunks or none; returns the number added."""
        seen = set()
        for c in chunks:
            emb = np.asarray(c.embedding)
            if emb.ndim != 1 or emb.shape[0] != self.dim:
                raise DimensionMismatch(self.dim, int(emb.shape[-1]) if emb.ndim else 0, "chunk embedding")
            if c.id in self._chunks or c.id in seen:
                raise DuplicateId(c.id)
            seen.add(c.id)
        for c in chunks:
            stored = KnowledgeChunk(
                id=c.id,
                title=c.title,
                section=c.section,
                text=c.text,
                embedding=np.asarray(c.embedding, dtype=np.float32).copy(),
            )
            self._chunks[c.id] = stored
            self._order.append(c.id)
        self._matrix = None
        return len(chunks)

    def _scoring_matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self._order:
                rows = [self._chunks[i].embedding for i in self._order]
                self._matrix = np.vstack(rows).astype(np.float64)
            else:
                self._matrix = np.zeros((0, self.dim), dtype=np.float64)
        return self._matrix

    def top_k(self, query_embedding: np.ndarray, k: int) -> List[RetrievalResult]:
        """The min(k, size) chunks with the largest inner product, ties by ascending id."""
        if int(k) < 1:
            raise ValueError("k must be a positive integer")
        q = np.asarray(query_embedding, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != self.dim:
            raise DimensionMismatch(self.dim, int(q.shape[-1]) if q.ndim else 0, "query embedding")
        if not self._order:
            return []
        scores = inner_product_scores(self._scoring_matrix(), q)
        ids = self._order
        best = heapq.nsmallest(int(k), range(len(ids)), key=lambda i: (-scores[i], ids[i]))
        return [RetrievalResult(chunk_id=ids[i], score=float(scores[i])) for i in best]

    def save(self, directory: str | Path) -> None:
        """Write both files, or leave the directory untouched when a chunk cannot be encoded."""
        lines = []
        for c in self:
            record = {
                "id": c.id,
                "title": c.title,
                "section": c.section,
                "text": c.text,
                "embedding": encode_f32(c.embedding),
            }
            try:
                lines.append((json.dumps(record, ensure_ascii=False) + "\n").encode("utf-8"))
            except UnicodeEncodeError as e:
                raise ValueError(f"chunk {c.id!r} holds text that is not valid UTF-8 ({e.reason})") from e
        meta = {"format": STORE_FORMAT, "version": STORE_VERSION, "dim": self.dim, "count": len(self)}

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        _replace_file(out / CHUNKS_FILE, b"".join(lines))
        _replace_file(out / META_FILE, (json.dumps(meta, indent=2) + "\n").encode("utf-8"))
        logger.info("saved %d chunks to %s", len(self), out)

    @staticmethod
    def load(directory: str | Path) -> "KnowledgeStore":
        src = Path(directory)
        if not src.is_dir():
            raise FileNotFoundError(f"store directory not found: {src}")
        meta_path = src / META_FILE
        if not meta_path.is_file():
            raise FormatError(f"{src} holds no {META_FILE}")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"{meta_path}: invalid JSON ({e})") from e
        if not isinstance(meta, dict) or meta.get("format") != STORE_FORMAT:
            raise FormatError(f"{meta_path}: not a {STORE_FORMAT} directory")
        if meta.get("version") != STORE_VERSION:
            raise FormatError(f"{meta_path}: unsupported version {meta.get('version')!r}")
        try:
            dim = int(meta["dim"])
            count = int(meta["count"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{meta_path}: missing dim/count") from e

        store = KnowledgeStore(dim)
        chunks_path = src / CHUNKS_FILE
        if count and not chunks_path.is_file():
            raise FormatError(f"{src} holds no {CHUNKS_FILE}")
        chunks = list(_read_chunks(chunks_path, dim)) if chunks_path.is_file() else []
        if len(chunks) != count:
            raise FormatError(f"{chunks_path}: expected {count} chunks, found {len(chunks)}")
        store.add_chunks(chunks)
        logger.info("loaded %d chunks from %s", count, src)
        return store


def _read_chunks(path: Path, dim: int) -> Iterable[KnowledgeChunk]:
    with path.open("r", encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                embedding = decode_f32(raw["embedding"], (dim,))
                yield KnowledgeChunk(
                    id=str(raw["id"]),
                    title=str(raw["title"]),
                    section=str(raw["section"]),
                    text=str(raw["text"]),
                    embedding=embedding,
                )
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(f"{path}:{lineno}: bad chunk record ({e})") from e


def _replace_file(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
