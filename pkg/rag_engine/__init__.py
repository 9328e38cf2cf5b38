"""Desk-scale retrieval-augmented generation.

Key exports:
    - RAGSystem / rag_query: retrieve, format, generate
    - KnowledgeStore: exact top-k store with directory persistence
    - RAGTrainerManager with RALTGeneratorTrainer / LSRRetrieverTrainer
    - Benchmarker / ExactMatchEvaluationMetric
"""

from .engine import RAGSystem, format_prompt, rag_query
from .evals import Benchmarker, ExactMatchEvaluationMetric, exact_match
from .models import (
    BenchmarkExample,
    GenerationConfig,
    KnowledgeChunk,
    RAGConfig,
    RAGResponse,
    TrainConfig,
    TrainExample,
    TrainResult,
)
from .store import KnowledgeStore
from .trainers import LSRRetrieverTrainer, RAGTrainerManager, RALTGeneratorTrainer

__all__ = [
    "RAGSystem",
    "format_prompt",
    "rag_query",
    "KnowledgeStore",
    "KnowledgeChunk",
    "RAGConfig",
    "RAGResponse",
    "GenerationConfig",
    "TrainConfig",
    "TrainExample",
    "TrainResult",
    "BenchmarkExample",
    "RAGTrainerManager",
    "RALTGeneratorTrainer",
    "LSRRetrieverTrainer",
    "Benchmarker",
    "ExactMatchEvaluationMetric",
    "exact_match",
]
