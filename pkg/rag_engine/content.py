from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Sequence, Tuple

from .errors import ConfigError, DuplicateId, SchemaError
from .models import CorpusRecord, KnowledgeChunk, RAGConfig, TrainExample
from .retriever import RetrieverModel, encode_context
from .store import KnowledgeStore

logger = logging.getLogger(__name__)


def iter_jsonl(path: str | Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, object) lazily; blank lines are skipped.

    Raises FileNotFoundError before the first item if the file is missing.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return _iter_jsonl(p)


def _iter_jsonl(p: Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(str(p), lineno, f"invalid JSON ({e.msg})") from e
            if not isinstance(raw, dict):
                raise SchemaError(str(p), lineno, "expected a JSON object")
            yield lineno, raw


def _string_field(raw: Dict[str, Any], key: str, path: str, lineno: int, *, required: bool = True) -> str:
    if key not in raw:
        if required:
            raise SchemaError(path, lineno, f"missing field {key!r}")
        return ""
    value = raw[key]
    if not isinstance(value, str):
        raise SchemaError(path, lineno, f"field {key!r} must be a string")
    try:
        value.encode("utf-8")
    except UnicodeEncodeError as e:
        raise SchemaError(path, lineno, f"field {key!r} is not valid UTF-8 text ({e.reason})") from e
    return value


def load_corpus(path: str | Path) -> List[CorpusRecord]:
    """Corpus JSONL: {"id", "title", "section", "text"}; only id is required."""
    records: List[CorpusRecord] = []
    for lineno, raw in iter_jsonl(path):
        records.append(
            CorpusRecord(
                id=_string_field(raw, "id", str(path), lineno),
                title=_string_field(raw, "title", str(path), lineno, required=False),
                section=_string_field(raw, "section", str(path), lineno, required=False),
                text=_string_field(raw, "text", str(path), lineno, required=False),
            )
        )
    return records


def load_train_dataset(path: str | Path) -> List[TrainExample]:
    out: List[TrainExample] = []
    for lineno, raw in iter_jsonl(path):
        query = _string_field(raw, "query", str(path), lineno)
        response = _string_field(raw, "response", str(path), lineno)
        if not query:
            raise SchemaError(str(path), lineno, "query must be non-empty")
        out.append(TrainExample(query=query, response=response))
    return out


def save_train_dataset(path: str | Path, examples: Sequence[TrainExample]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps({"query": ex.query, "response": ex.response}, ensure_ascii=False) + "\n")


def load_rag_config(path: str | Path) -> RAGConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON ({e.msg})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a JSON object")
    return RAGConfig.from_dict(data)


def embed_records(retriever: RetrieverModel, records: Sequence[CorpusRecord]) -> List[KnowledgeChunk]:
    seen = set()
    chunks: List[KnowledgeChunk] = []
    for r in records:
        if r.id in seen:
            raise DuplicateId(r.id)
        seen.add(r.id)
        chunks.append(
            KnowledgeChunk(
                id=r.id,
                title=r.title,
                section=r.section,
                text=r.text,
                embedding=encode_context(retriever, r),
            )
        )
    return chunks


def ingest_corpus(store: KnowledgeStore, retriever: RetrieverModel, records: Sequence[CorpusRecord]) -> int:
    """Embed every record with the context encoder and add them all (or none)."""
    added = store.add_chunks(embed_records(retriever, records))
    logger.info("ingested %d chunks (store size %d)", added, len(store))
    return added
