from __future__ import annotations

from rag_engine.trainers import RAGTrainerManager

from .models import FLTask


def get_federated_task(manager: RAGTrainerManager) -> FLTask:
    """FL task for the manager's mode; MissingTrainer if that trainer is absent."""
    trainer = manager.target_trainer()
    return FLTask(model_role=manager.mode, train_config=trainer.config)
