from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

from .generator import LogLinearLM, generate
from .models import (
    GenerationConfig,
    KnowledgeChunk,
    PLACEHOLDER,
    RAGConfig,
    RAGResponse,
    RetrievalResult,
    check_prompt_template,
)
from .retriever import RetrieverModel, chunk_text, encode_query
from .store import KnowledgeStore


def format_prompt(config: RAGConfig, query: str, chunks: Sequence[KnowledgeChunk]) -> str:
    """Join chunk texts in retrieval order, truncate, and fill the template.

    Substitution is a single pass, so braces inside the query or the
    context are never re-expanded.
    """
    check_prompt_template(config.prompt_template)
    context = config.context_separator.join(chunk_text(c) for c in chunks)
    if config.max_context_chars is not None:
        context = context[: int(config.max_context_chars)]
    values = {"context": context, "query": query}
    return PLACEHOLDER.sub(lambda m: values[m.group(1)], config.prompt_template)


@dataclass
class RAGSystem:
    """Knowledge store + dual-encoder retriever + generator.

    Queries are read-only and may run concurrently; they must not overlap
    with training updates.
    """
    knowledge_store: KnowledgeStore
    retriever: RetrieverModel
    generator: LogLinearLM
    rag_config: RAGConfig = field(default_factory=RAGConfig)

    def retrieve(self, query: str, top_k: int | None = None) -> List[RetrievalResult]:
        k = self.rag_config.top_k if top_k is None else int(top_k)
        q = encode_query(self.retriever, query)
        return self.knowledge_store.top_k(q, k)

    def chunks_for(self, results: Sequence[RetrievalResult]) -> List[KnowledgeChunk]:
        return [self.knowledge_store.get(r.chunk_id) for r in results]

    def query(self, query: str, generation_config: GenerationConfig | None = None) -> RAGResponse:
        return rag_query(self, query, generation_config or GenerationConfig())


def rag_query(system: RAGSystem, query: str, generation_config: GenerationConfig) -> RAGResponse:
    """encode_query -> top_k -> format_prompt -> generate.

    An empty store retrieves nothing and generation runs on a context-free prompt.
    """
    retrieved = system.retrieve(query)
    prompt = format_prompt(system.rag_config, query, system.chunks_for(retrieved))
    text = generate(system.generator, prompt, generation_config)
    return RAGResponse(text=text, retrieved=retrieved, prompt=prompt)
