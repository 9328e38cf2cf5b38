import numpy as np
import pytest

from rag_engine.errors import ConfigError, FreezeViolation, MissingTrainer
from rag_engine.models import TrainConfig, TrainExample, TrainResult
from rag_engine.params import extract_parameters
from rag_engine.trainers import (
    LSRRetrieverTrainer,
    RAGTrainerManager,
    RALTGeneratorTrainer,
    build_ralt_instances,
    build_trainer,
    epoch_order,
    ralt_step,
    train_generator_ralt,
    train_retriever_lsr,
)


def test_ralt_instances_one_per_retrieved_chunk(make_system):
    system = make_system(top_k=2)
    example = TrainExample("capital of peru", "lima")
    instances = build_ralt_instances(system, example)
    retrieved = system.chunks_for(system.retrieve(example.query))
    assert len(instances) == 2
    for inst, chunk in zip(instances, retrieved):
        assert inst.prompt.startswith(f"{chunk.title} {chunk.section} {chunk.text}\n\n")
        assert inst.target == "lima"


def test_ralt_counts_instances(make_system):
    system = make_system(top_k=2)
    result = train_generator_ralt(system, [TrainExample("capital of peru", "lima")], TrainConfig(epochs=1))
    assert result.examples_seen == 2
    assert len(result.losses_per_epoch) == 1


def test_ralt_freezes_retriever(make_system, train_examples):
    system = make_system()
    before = extract_parameters(system, "retriever")
    gen_before = extract_parameters(system, "generator")
    RAGTrainerManager("generator", generator_trainer=RALTGeneratorTrainer(system, train_examples, TrainConfig(epochs=2))).train()
    assert extract_parameters(system, "retriever") == before
    assert extract_parameters(system, "generator") != gen_before


def test_lsr_freezes_generator_and_context_encoder(make_system, train_examples):
    system = make_system(top_k=3)
    gen_before = extract_parameters(system, "generator")
    context_before = system.retriever.context_encoder.weights.copy()
    query_before = system.retriever.query_encoder.weights.copy()
    trainer = LSRRetrieverTrainer(system, train_examples, TrainConfig(epochs=2, learning_rate=0.5))
    RAGTrainerManager("retriever", retriever_trainer=trainer).train()
    assert extract_parameters(system, "generator") == gen_before
    assert np.array_equal(system.retriever.context_encoder.weights, context_before)
    assert not np.array_equal(system.retriever.query_encoder.weights, query_before)


@pytest.mark.parametrize("role", ["generator", "retriever"])
def test_training_is_deterministic(make_system, train_examples, role):
    cfg = TrainConfig(epochs=2, batch_size=2, seed=7)
    runs = []
    for _ in range(2):
        system = make_system(top_k=3)
        build_trainer(role, system, train_examples, cfg).train()
        runs.append(extract_parameters(system, role))
    assert runs[0] == runs[1]


@pytest.mark.parametrize("role", ["generator", "retriever"])
def test_split_epochs_match_one_run(make_system, train_examples, role):
    whole = make_system(top_k=3)
    build_trainer(role, whole, train_examples, TrainConfig(epochs=3, seed=1)).train()
    split = make_system(top_k=3)
    trainer = build_trainer(role, split, train_examples, TrainConfig(epochs=1, seed=1))
    for epoch in range(3):
        trainer.train(start_epoch=epoch)
    assert extract_parameters(whole, role) == extract_parameters(split, role)


def test_batch_size_one_is_a_sequence_of_single_steps(make_system, train_examples):
    cfg = TrainConfig(epochs=1, batch_size=1, learning_rate=0.3, seed=4)
    trained = make_system(top_k=2)
    result = train_generator_ralt(trained, train_examples, cfg)

    manual = make_system(top_k=2)
    losses = []
    for i in epoch_order(len(train_examples), cfg.seed, 0):
        for inst in build_ralt_instances(manual, train_examples[i]):
            losses.append(ralt_step(manual.generator, inst.prompt, inst.target, cfg.learning_rate))
    assert np.array_equal(trained.generator.weights, manual.generator.weights)
    assert result.losses_per_epoch == [sum(losses) / len(losses)]


def test_ralt_epoch_losses_do_not_increase(make_system, train_examples):
    system = make_system(retriever="overlap", features=1024, top_k=1)
    losses = train_generator_ralt(system, train_examples, TrainConfig(epochs=6, learning_rate=0.05)).losses_per_epoch
    assert all(later <= earlier for earlier, later in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_lsr_skips_single_chunk_retrieval(make_system, train_examples):
    system = make_system(top_k=1)
    before = system.retriever.query_encoder.weights.copy()
    result = train_retriever_lsr(system, train_examples, TrainConfig(epochs=2))
    assert result.skipped == 2 * len(train_examples)
    assert result.examples_seen == 0
    assert result.losses_per_epoch == [0.0, 0.0]
    assert np.array_equal(system.retriever.query_encoder.weights, before)


def test_empty_dataset_rejected(make_system):
    with pytest.raises(ValueError):
        train_generator_ralt(make_system(), [], TrainConfig())
    with pytest.raises(ValueError):
        train_retriever_lsr(make_system(), [], TrainConfig())


def test_manager_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        RAGTrainerManager("both")


def test_manager_without_trainer_for_mode(make_system, train_examples):
    manager = RAGTrainerManager("retriever", generator_trainer=RALTGeneratorTrainer(make_system(), train_examples))
    with pytest.raises(MissingTrainer):
        manager.train()


class _LeakyRetrieverTrainer(LSRRetrieverTrainer):
    def train(self, *, start_epoch: int = 0) -> TrainResult:
        self.rag_system.generator.weights[0, 0] += 1.0
        return TrainResult(losses_per_epoch=[0.0], examples_seen=0)


def test_manager_detects_frozen_model_change(make_system, train_examples):
    manager = RAGTrainerManager("retriever", retriever_trainer=_LeakyRetrieverTrainer(make_system(), train_examples))
    with pytest.raises(FreezeViolation):
        manager.train()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rate": 0.0},
        {"learning_rate": float("inf")},
        {"epochs": 0},
        {"batch_size": 0},
        {"lsr_tau": 0.0},
        {"lsr_kl_direction": "sideways"},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)
