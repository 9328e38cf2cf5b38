"""Benchmarks and metrics: exact match over RAG answers, plus retrieval rank metrics."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Protocol, Sequence, Tuple, Union

from .engine import RAGSystem, rag_query
from .errors import ConfigError, InsufficientExamples, SchemaError
from .content import iter_jsonl
from .models import AGG_MODES, BenchmarkExample, EvaluationResult, GenerationConfig
from .rng import SplitMix64

logger = logging.getLogger(__name__)


def normalize_answer(s: str) -> str:
    """Lowercase, trim, collapse whitespace runs; punctuation is kept."""
    return " ".join(s.lower().split())


def exact_match(prediction: str, gold: str) -> float:
    return 1.0 if normalize_answer(prediction) == normalize_answer(gold) else 0.0


class EvaluationMetric(Protocol):
    name: str

    def __call__(self, prediction: str, actual: str) -> float: ...


class ExactMatchEvaluationMetric:
    name = "exact_match"

    def __call__(self, prediction: str, actual: str) -> float:
        return exact_match(prediction, actual)


def _parse_benchmark_line(path: str, lineno: int, raw: dict) -> BenchmarkExample:
    query, response = raw.get("query"), raw.get("response")
    if not isinstance(query, str):
        raise SchemaError(path, lineno, "field 'query' must be a string")
    if not isinstance(response, str) or not response:
        raise SchemaError(path, lineno, "field 'response' must be a non-empty string")
    choices = raw.get("choices")
    if choices is not None:
        if not isinstance(choices, list) or not all(isinstance(c, str) for c in choices):
            raise SchemaError(path, lineno, "field 'choices' must be a list of strings or null")
        if response not in choices:
            raise SchemaError(path, lineno, "response must be one of the choices")
    return BenchmarkExample(query=query, response=response, choices=list(choices) if choices is not None else None)


def load_benchmark(path: str | Path, streaming: bool = False) -> Iterator[BenchmarkExample]:
    """Benchmark JSONL, one example per line, in file order.

    streaming reads lazily so a SchemaError surfaces when its line is reached;
    eager mode reads and validates the whole file up front.
    """
    rows = iter_jsonl(path)
    examples = (_parse_benchmark_line(str(path), lineno, raw) for lineno, raw in rows)
    if streaming:
        return examples
    return iter(list(examples))


def build_fewshot_prefix(examples: Sequence[BenchmarkExample], k: int, seed: int) -> str:
    """k examples drawn without replacement, each as "Q: ...\\nA: ...\\n\\n"."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(examples):
        raise InsufficientExamples(f"asked for {k} few-shot examples, pool has {len(examples)}")
    picks = SplitMix64(seed).sample_indices(len(examples), k, label="fewshot")
    return "".join(f"Q: {examples[i].prompt}\nA: {examples[i].response}\n\n" for i in picks)


def aggregate_scores(scores: Sequence[float], agg: str) -> float:
    if agg not in AGG_MODES:
        raise ConfigError(f"agg must be one of {AGG_MODES}, got {agg!r}")
    if not scores:
        return 0.0
    if agg == "avg":
        return float(sum(scores) / len(scores))
    if agg == "sum":
        return float(sum(scores))
    return float(max(scores))


def run_benchmark(
    system: RAGSystem,
    benchmark: Iterable[BenchmarkExample],
    metric: EvaluationMetric,
    num_examples: Optional[int] = None,
    agg: str = "avg",
    fewshot_prefix: str = "",
    generation_config: Optional[GenerationConfig] = None,
) -> EvaluationResult:
    """Score the first num_examples examples (or all); an empty run aggregates to 0.0."""
    if agg not in AGG_MODES:
        raise ConfigError(f"agg must be one of {AGG_MODES}, got {agg!r}")
    if num_examples is not None and num_examples < 0:
        raise ConfigError("num_examples must be >= 0")
    gen = generation_config or GenerationConfig(mode="greedy")
    if gen.mode != "greedy":
        raise ConfigError("benchmarks decode greedily")
    examples = benchmark if num_examples is None else itertools.islice(benchmark, num_examples)
    scores: List[float] = []
    predictions: List[str] = []
    for ex in examples:
        response = rag_query(system, fewshot_prefix + ex.prompt, gen)
        predictions.append(response.text)
        scores.append(float(metric(response.text, ex.response)))
    result = EvaluationResult(
        per_example_scores=scores,
        aggregate=aggregate_scores(scores, agg),
        num_examples=len(scores),
        agg_mode=agg,
        predictions=predictions,
    )
    logger.info("benchmark: %s %s over %d examples = %.4f", getattr(metric, "name", "metric"), agg, len(scores), result.aggregate)
    return result


@dataclass
class Benchmarker:
    rag_system: RAGSystem
    generation_config: Optional[GenerationConfig] = None

    def run(
        self,
        benchmark: Union[str, Path, Iterable[BenchmarkExample]],
        metric: EvaluationMetric,
        *,
        is_streaming: bool = False,
        num_examples: Optional[int] = None,
        agg: str = "avg",
        fewshot_prefix: str = "",
    ) -> EvaluationResult:
        if isinstance(benchmark, (str, Path)):
            benchmark = load_benchmark(benchmark, streaming=is_streaming)
        return run_benchmark(
            self.rag_system,
            benchmark,
            metric,
            num_examples=num_examples,
            agg=agg,
            fewshot_prefix=fewshot_prefix,
            generation_config=self.generation_config,
        )


def reciprocal_rank(system: RAGSystem, query: str, gold_chunk_id: str) -> float:
    """1 / rank of the gold chunk over the whole store, 0.0 if absent."""
    ranked = system.retrieve(query, top_k=max(len(system.knowledge_store), 1))
    for rank, r in enumerate(ranked, start=1):
        if r.chunk_id == gold_chunk_id:
            return 1.0 / rank
    return 0.0


def mean_reciprocal_rank(system: RAGSystem, pairs: Sequence[Tuple[str, str]]) -> float:
    """MRR over (query, gold chunk id) pairs."""
    if not pairs:
        return 0.0
    return float(sum(reciprocal_rank(system, q, gold) for q, gold in pairs) / len(pairs))
