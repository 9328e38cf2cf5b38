"""Desk-scale RALT, LSR and RALT-then-LSR experiments on synthetic corpora.

Each driver builds its own system from a seed, measures before training,
trains through RAGTrainerManager (so freeze contracts are checked) and
measures again.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict

from .content import ingest_corpus
from .engine import RAGSystem
from .evals import ExactMatchEvaluationMetric, mean_reciprocal_rank, run_benchmark
from .generator import init_generator
from .models import GenerationConfig, RAGConfig, TrainConfig, TrainResult
from .retriever import init_retriever, overlap_retriever
from .store import KnowledgeStore
from .synthetic import FactTask, KEPT_WORDS, copy_generator, copy_task, fact_task
from .trainers import LSRRetrieverTrainer, RAGTrainerManager, RALTGeneratorTrainer

logger = logging.getLogger(__name__)

ANSWER_TOKENS = 4


def _eval_em(system: RAGSystem, task: FactTask) -> float:
    result = run_benchmark(
        system,
        task.benchmark,
        ExactMatchEvaluationMetric(),
        agg="avg",
        generation_config=GenerationConfig(max_tokens=ANSWER_TOKENS, mode="greedy"),
    )
    return result.aggregate


def build_fact_system(
    task: FactTask,
    seed: int,
    *,
    retriever_features: int = 2048,
    generator_features: int = 4096,
    top_k: int = 1,
) -> RAGSystem:
    """Token-overlap retriever over the fact chunks plus a randomly initialized generator."""
    retriever = overlap_retriever(retriever_features)
    store = KnowledgeStore(retriever.dim)
    ingest_corpus(store, retriever, task.corpus)
    generator = init_generator(task.build_vocab(), generator_features, seed)
    return RAGSystem(store, retriever, generator, RAGConfig(top_k=top_k))


@dataclass(frozen=True)
class RaltReport:
    seed: int
    em_before: float
    em_after: float
    train_result: TrainResult

    @property
    def gain(self) -> float:
        return self.em_after - self.em_before

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "gain": self.gain}


def run_ralt_experiment(seed: int = 0, *, epochs: int = 30, learning_rate: float = 0.2) -> RaltReport:
    """Exact match on held-out facts before and after RALT fine-tuning."""
    task = fact_task()
    system = build_fact_system(task, seed)
    em_before = _eval_em(system, task)
    config = TrainConfig(learning_rate=learning_rate, epochs=epochs, seed=seed)
    manager = RAGTrainerManager(
        mode="generator",
        generator_trainer=RALTGeneratorTrainer(system, task.train, config),
    )
    result = manager.train()
    em_after = _eval_em(system, task)
    logger.info("ralt seed %d: em %.3f -> %.3f", seed, em_before, em_after)
    return RaltReport(seed=seed, em_before=em_before, em_after=em_after, train_result=result)


@dataclass(frozen=True)
class LsrReport:
    seed: int
    mrr_before: float
    mrr_after: float
    train_result: TrainResult

    @property
    def gain(self) -> float:
        return self.mrr_after - self.mrr_before

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "gain": self.gain}


def run_lsr_experiment(
    seed: int = 0,
    *,
    epochs: int = 40,
    learning_rate: float = 1.0,
    dim: int = 32,
    features: int = 512,
) -> LsrReport:
    """Mean reciprocal rank of the answer-bearing chunk before and after LSR.

    The frozen generator copies a kept word from its prompt, so its
    likelihoods single out the chunk holding the answer.
    """
    task = copy_task()
    retriever = init_retriever(dim, features, seed)
    store = KnowledgeStore(dim)
    ingest_corpus(store, retriever, task.corpus)
    vocab = task.build_vocab()
    generator = copy_generator(vocab, 2048, KEPT_WORDS[: len(task.corpus)])
    system = RAGSystem(store, retriever, generator, RAGConfig(top_k=len(task.corpus)))

    mrr_before = mean_reciprocal_rank(system, task.gold_pairs)
    config = TrainConfig(learning_rate=learning_rate, epochs=epochs, seed=seed)
    manager = RAGTrainerManager(
        mode="retriever",
        retriever_trainer=LSRRetrieverTrainer(system, task.train, config),
    )
    result = manager.train()
    mrr_after = mean_reciprocal_rank(system, task.gold_pairs)
    logger.info("lsr seed %d: mrr %.3f -> %.3f", seed, mrr_before, mrr_after)
    return LsrReport(seed=seed, mrr_before=mrr_before, mrr_after=mrr_after, train_result=result)


@dataclass(frozen=True)
class RaditReport:
    seed: int
    em_before: float
    em_after_ralt: float
    em_after_lsr: float
    mrr_before_lsr: float
    mrr_after_lsr: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def run_radit_experiment(
    seed: int = 0,
    *,
    ralt_epochs: int = 30,
    ralt_learning_rate: float = 0.2,
    lsr_epochs: int = 5,
    lsr_learning_rate: float = 0.05,
    lsr_top_k: int = 2,
) -> RaditReport:
    """RALT on the generator, then LSR on the query encoder, on the fact corpus.

    LSR retrieves lsr_top_k chunks per query; evaluation keeps top_k = 1.
    """
    task = fact_task()
    system = build_fact_system(task, seed)
    em_before = _eval_em(system, task)

    ralt = RAGTrainerManager(
        mode="generator",
        generator_trainer=RALTGeneratorTrainer(
            system, task.train, TrainConfig(learning_rate=ralt_learning_rate, epochs=ralt_epochs, seed=seed)
        ),
    )
    ralt.train()
    em_after_ralt = _eval_em(system, task)

    gold = [(ex.query, task.gold_chunks[ex.query]) for ex in task.train]
    mrr_before = mean_reciprocal_rank(system, gold)
    eval_config = system.rag_config
    system.rag_config = replace(eval_config, top_k=lsr_top_k)
    try:
        lsr = RAGTrainerManager(
            mode="retriever",
            retriever_trainer=LSRRetrieverTrainer(
                system, task.train, TrainConfig(learning_rate=lsr_learning_rate, epochs=lsr_epochs, seed=seed)
            ),
        )
        lsr.train()
    finally:
        system.rag_config = eval_config
    mrr_after = mean_reciprocal_rank(system, gold)
    em_after_lsr = _eval_em(system, task)
    return RaditReport(
        seed=seed,
        em_before=em_before,
        em_after_ralt=em_after_ralt,
        em_after_lsr=em_after_lsr,
        mrr_before_lsr=mrr_before,
        mrr_after_lsr=mrr_after,
    )
