"""Generator (RALT) and retriever (LSR) fine-tuning with hand-derived gradients.

RALT builds one instance per retrieved chunk and minimizes the mean
next-token cross-entropy of the response given that chunk and the query.

LSR distills the frozen generator into the query encoder: over the top-k
retrieved chunks, p_R = softmax(s / tau) from retrieval scores and
p_LSR = softmax(l) from response log-likelihoods; the loss is
KL(p_LSR || p_R) by default, with p_LSR held constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .engine import RAGSystem, format_prompt
from .errors import ConfigError, DegenerateRetrieval, FreezeViolation, MissingTrainer
from .generator import LogLinearLM, log_softmax, sequence_log_prob, sequence_loss_and_grad
from .models import MODEL_ROLES, TrainConfig, TrainExample, TrainResult
from .optim import ColumnGradient, sgd_update
from .params import extract_parameters
from .retriever import RetrieverModel, query_features
from .rng import SplitMix64
from .store import inner_product_scores
from .text import tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RaltInstance:
    prompt: str
    target: str


def build_ralt_instances(system: RAGSystem, example: TrainExample, top_k: Optional[int] = None) -> List[RaltInstance]:
    """One (prompt, target) pair per retrieved chunk, prompt built from that chunk alone."""
    results = system.retrieve(example.query, top_k)
    return [
        RaltInstance(
            prompt=format_prompt(system.rag_config, example.query, [chunk]),
            target=example.response,
        )
        for chunk in system.chunks_for(results)
    ]


def ralt_step(lm: LogLinearLM, prompt: str, target: str, learning_rate: float) -> float:
    """One SGD step on one instance; returns the loss before the update."""
    loss, grad = sequence_loss_and_grad(lm, prompt, target)
    sgd_update(lm.weights, grad, learning_rate)
    return loss


@dataclass(frozen=True)
class LSRResult:
    loss: float
    grad: ColumnGradient  # w.r.t. the query encoder weights
    chunk_ids: List[str]
    retriever_probs: np.ndarray
    lm_probs: np.ndarray


def kl_score_gradient(
    scores: np.ndarray,
    log_likelihoods: np.ndarray,
    tau: float = 1.0,
    direction: str = "lm_to_retriever",
) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """LSR loss and its gradient w.r.t. the retrieval scores.

    Returns (loss, dloss/ds, log p_R, log p_LSR). p_LSR is a constant.
    """
    log_pr = log_softmax(np.asarray(scores, dtype=np.float64) / tau)
    log_pl = log_softmax(np.asarray(log_likelihoods, dtype=np.float64))
    if direction == "lm_to_retriever":
        p_l = np.exp(log_pl)
        loss = float(np.sum(p_l * (log_pl - log_pr)))
        ds = (np.exp(log_pr) - p_l) / tau
    elif direction == "retriever_to_lm":
        p_r = np.exp(log_pr)
        loss = float(np.sum(p_r * (log_pr - log_pl)))
        ds = p_r * ((log_pr - log_pl) - loss) / tau
    else:
        raise ConfigError(f"unknown KL direction {direction!r}")
    # rounding can leave KL a hair below zero
    return max(loss, 0.0), ds, log_pr, log_pl


def lsr_loss_and_grad(
    system: RAGSystem,
    example: TrainExample,
    top_k: Optional[int] = None,
    tau: float = 1.0,
    *,
    direction: str = "lm_to_retriever",
    length_normalize: bool = False,
) -> LSRResult:
    """KL between LM-likelihood and retrieval distributions over the retrieved chunks.

    s_i = (W_q phi(q)) . e_i, so dloss/dW_q = sum_i dloss/ds_i * e_i phi(q)^T;
    the context encoder and generator get no gradient.
    """
    results = system.retrieve(example.query, top_k)
    if len(results) < 2:
        raise DegenerateRetrieval(
            f"LSR needs at least 2 retrieved chunks, got {len(results)} for {example.query!r}"
        )
    chunks = system.chunks_for(results)
    retriever = system.retriever
    phi = query_features(retriever, example.query)
    q = retriever.query_encoder.encode_features(phi)
    emb = np.vstack([c.embedding for c in chunks]).astype(np.float64)
    s = inner_product_scores(emb, q)

    ell = np.array(
        [
            sequence_log_prob(system.generator, format_prompt(system.rag_config, example.query, [c]), example.response)
            for c in chunks
        ],
        dtype=np.float64,
    )
    if length_normalize:
        ell = ell / (len(tokenize(example.response)) + 1)

    loss, ds, log_pr, log_pl = kl_score_gradient(s, ell, tau, direction)

    idx, counts = phi.arrays()
    grad = ColumnGradient(
        columns=idx,
        values=np.outer(emb.T @ ds, counts),
        shape=tuple(retriever.query_encoder.weights.shape),
    )
    return LSRResult(
        loss=loss,
        grad=grad,
        chunk_ids=[r.chunk_id for r in results],
        retriever_probs=np.exp(log_pr),
        lm_probs=np.exp(log_pl),
    )


def epoch_order(n: int, seed: int, epoch: int) -> List[int]:
    """Example order for one epoch: a splitmix64(seed + epoch) permutation."""
    return SplitMix64(seed + epoch).permutation(n, label=f"epoch:{epoch}")


def _mean(xs: Sequence[float]) -> float:
    return float(sum(xs) / len(xs)) if xs else 0.0


def _batches(items: Sequence, size: int):
    for i in range(0, len(items), size):
        yield items[i : i + size]


def train_generator_ralt(
    system: RAGSystem,
    dataset: Sequence[TrainExample],
    config: TrainConfig,
    *,
    start_epoch: int = 0,
) -> TrainResult:
    """SGD over RALT instances; the retriever is never touched.

    examples_seen counts instances (one per retrieved chunk) over all epochs.
    start_epoch offsets the shuffle seeds so split runs match one long run.
    """
    if not dataset:
        raise ValueError("RALT training needs a non-empty dataset")
    lm = system.generator
    losses: List[float] = []
    seen = 0
    for epoch in range(start_epoch, start_epoch + config.epochs):
        instances: List[RaltInstance] = []
        for i in epoch_order(len(dataset), config.seed, epoch):
            instances.extend(build_ralt_instances(system, dataset[i]))
        epoch_losses: List[float] = []
        for batch in _batches(instances, config.batch_size):
            results = [sequence_loss_and_grad(lm, inst.prompt, inst.target) for inst in batch]
            sgd_update(lm.weights, ColumnGradient.mean([g for _, g in results]), config.learning_rate)
            epoch_losses.extend(loss for loss, _ in results)
        seen += len(epoch_losses)
        losses.append(_mean(epoch_losses))
        logger.info("ralt epoch %d: loss=%.6f instances=%d", epoch, losses[-1], len(epoch_losses))
    return TrainResult(losses_per_epoch=losses, examples_seen=seen)


def train_retriever_lsr(
    system: RAGSystem,
    dataset: Sequence[TrainExample],
    config: TrainConfig,
    *,
    start_epoch: int = 0,
) -> TrainResult:
    """SGD on the query encoder; generator and context encoder stay bit-identical.

    Retrieval is fresh for every example, so scores always come from the
    current query encoder. Examples retrieving fewer than two chunks are
    skipped and counted.
    """
    if not dataset:
        raise ValueError("LSR training needs a non-empty dataset")
    weights = system.retriever.query_encoder.weights
    losses: List[float] = []
    seen = 0
    skipped = 0
    for epoch in range(start_epoch, start_epoch + config.epochs):
        order = epoch_order(len(dataset), config.seed, epoch)
        epoch_losses: List[float] = []
        for batch in _batches(order, config.batch_size):
            results: List[LSRResult] = []
            for i in batch:
                try:
                    results.append(
                        lsr_loss_and_grad(
                            system,
                            dataset[i],
                            tau=config.lsr_tau,
                            direction=config.lsr_kl_direction,
                            length_normalize=config.lsr_length_normalize,
                        )
                    )
                except DegenerateRetrieval as e:
                    skipped += 1
                    logger.warning("skipping LSR example %d: %s", i, e)
            if results:
                sgd_update(weights, ColumnGradient.mean([r.grad for r in results]), config.learning_rate)
                epoch_losses.extend(r.loss for r in results)
        seen += len(epoch_losses)
        losses.append(_mean(epoch_losses))
        logger.info("lsr epoch %d: loss=%.6f examples=%d", epoch, losses[-1], len(epoch_losses))
    return TrainResult(losses_per_epoch=losses, examples_seen=seen, skipped=skipped)


@dataclass
class RALTGeneratorTrainer:
    rag_system: RAGSystem
    train_dataset: Sequence[TrainExample]
    config: TrainConfig = field(default_factory=TrainConfig)
    role = "generator"

    @property
    def model(self) -> LogLinearLM:
        return self.rag_system.generator

    def train(self, *, start_epoch: int = 0) -> TrainResult:
        return train_generator_ralt(self.rag_system, self.train_dataset, self.config, start_epoch=start_epoch)


@dataclass
class LSRRetrieverTrainer:
    rag_system: RAGSystem
    train_dataset: Sequence[TrainExample]
    config: TrainConfig = field(default_factory=TrainConfig)
    role = "retriever"

    @property
    def model(self) -> RetrieverModel:
        return self.rag_system.retriever

    def train(self, *, start_epoch: int = 0) -> TrainResult:
        return train_retriever_lsr(self.rag_system, self.train_dataset, self.config, start_epoch=start_epoch)


def build_trainer(role: str, system: RAGSystem, dataset: Sequence[TrainExample], config: TrainConfig):
    if role == "retriever":
        return LSRRetrieverTrainer(system, dataset, config)
    if role == "generator":
        return RALTGeneratorTrainer(system, dataset, config)
    raise ConfigError(f"unknown model role {role!r}")


@dataclass
class RAGTrainerManager:
    """Runs the trainer for `mode` and checks the other model stayed frozen."""
    mode: str
    retriever_trainer: Optional[LSRRetrieverTrainer] = None
    generator_trainer: Optional[RALTGeneratorTrainer] = None

    def __post_init__(self) -> None:
        if self.mode not in MODEL_ROLES:
            raise ConfigError(f"mode must be one of {MODEL_ROLES}, got {self.mode!r}")

    @property
    def frozen_role(self) -> str:
        return "generator" if self.mode == "retriever" else "retriever"

    def target_trainer(self):
        trainer = self.retriever_trainer if self.mode == "retriever" else self.generator_trainer
        if trainer is None:
            raise MissingTrainer(f"no {self.mode} trainer configured")
        return trainer

    def train(self, *, start_epoch: int = 0) -> TrainResult:
        trainer = self.target_trainer()
        system = trainer.rag_system
        before = extract_parameters(system, self.frozen_role).checksum()
        # LSR also keeps the context encoder fixed; stored embeddings depend on it
        context_before = system.retriever.context_encoder.weights.tobytes()
        result = trainer.train(start_epoch=start_epoch)
        if extract_parameters(system, self.frozen_role).checksum() != before:
            raise FreezeViolation(f"{self.frozen_role} parameters changed while training the {self.mode}")
        if system.retriever.context_encoder.weights.tobytes() != context_before:
            raise FreezeViolation("context encoder changed during training")
        return result
