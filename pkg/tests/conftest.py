from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np
import pytest

from rag_engine.content import ingest_corpus
from rag_engine.engine import RAGSystem
from rag_engine.generator import build_vocab, init_generator
from rag_engine.models import CorpusRecord, RAGConfig, TrainExample
from rag_engine.retriever import init_retriever, overlap_retriever
from rag_engine.store import KnowledgeStore


FACTS = [
    CorpusRecord(id="c1", title="france", section="capital", text="paris is the capital of france"),
    CorpusRecord(id="c2", title="peru", section="capital", text="lima is the capital of peru"),
    CorpusRecord(id="c3", title="norway", section="capital", text="oslo is the capital of norway"),
    CorpusRecord(id="c4", title="japan", section="capital", text="tokyo is the capital of japan"),
]

TRAIN = [
    TrainExample(query="capital of france", response="paris"),
    TrainExample(query="capital of peru", response="lima"),
    TrainExample(query="capital of norway", response="oslo"),
    TrainExample(query="capital of japan", response="tokyo"),
    TrainExample(query="what is the capital of france", response="paris"),
]


@pytest.fixture
def facts() -> List[CorpusRecord]:
    return list(FACTS)


@pytest.fixture
def train_examples() -> List[TrainExample]:
    return list(TRAIN)


@pytest.fixture
def make_system() -> Callable[..., RAGSystem]:
    """Factory for small systems over a corpus; every argument has a test-friendly default."""

    def build(
        records: Sequence[CorpusRecord] = FACTS,
        *,
        retriever: str = "random",
        dim: int = 8,
        features: int = 64,
        gen_features: int = 128,
        top_k: int = 2,
        seed: int = 0,
        dtype: type = np.float32,
        vocab_size: int = 64,
    ) -> RAGSystem:
        if retriever == "overlap":
            r = overlap_retriever(features, dtype=dtype)
        else:
            r = init_retriever(dim, features, seed, dtype=dtype)
        store = KnowledgeStore(r.dim)
        ingest_corpus(store, r, records)
        texts = [rec.full_text for rec in records] + [f"{ex.query} {ex.response}" for ex in TRAIN]
        generator = init_generator(build_vocab(texts, vocab_size), gen_features, seed + 1, dtype=dtype)
        return RAGSystem(store, r, generator, RAGConfig(top_k=top_k))

    return build
