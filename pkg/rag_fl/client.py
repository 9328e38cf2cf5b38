from __future__ import annotations

import logging
import socket
from typing import Optional, Sequence, Tuple

from rag_engine.engine import RAGSystem
from rag_engine.models import TrainExample
from rag_engine.params import ModelParameters, extract_parameters, load_parameters
from rag_engine.trainers import RAGTrainerManager, build_trainer

from .codec import read_message, send_message
from .errors import ProtocolError, RemoteAbort
from .models import DoneMessage, ErrorMessage, FLTask, JoinMessage, ParamsMessage, UpdateMessage

logger = logging.getLogger(__name__)


class FedAvgClient:
    """Trains the task's model role on a local shard for every PARAMS broadcast.

    Round r trains epochs (r-1)*E .. r*E-1 so shuffles line up with one
    centralized run of R*E epochs.
    """

    def __init__(
        self,
        task: FLTask,
        system: RAGSystem,
        train_dataset: Sequence[TrainExample],
        server_address: Tuple[str, int],
        *,
        client_id: str = "client-0",
        connect_timeout: Optional[float] = 10.0,
    ) -> None:
        self.task = task
        self.system = system
        self.train_dataset = list(train_dataset)
        self.server_address = server_address
        self.client_id = client_id
        self.connect_timeout = connect_timeout
        self.rounds_trained = 0

    def _train_round(self, rnd: int) -> int:
        if not self.train_dataset:
            logger.warning("client %s has no local data; reporting 0 examples", self.client_id)
            return 0
        role = self.task.model_role
        trainer = build_trainer(role, self.system, self.train_dataset, self.task.train_config)
        manager = RAGTrainerManager(
            mode=role,
            retriever_trainer=trainer if role == "retriever" else None,
            generator_trainer=trainer if role == "generator" else None,
        )
        start_epoch = (rnd - 1) * self.task.train_config.epochs
        result = manager.train(start_epoch=start_epoch)
        return result.examples_seen

    def run(self) -> ModelParameters:
        try:
            sock = socket.create_connection(self.server_address, timeout=self.connect_timeout)
        except OSError as e:
            host, port = self.server_address
            raise ConnectionError(f"cannot reach server at {host}:{port}: {e}") from e
        with sock:
            sock.settimeout(None)
            send_message(sock, JoinMessage(self.client_id))
            logger.info("client %s joined %s:%d", self.client_id, *self.server_address)
            expected_round = 1
            role = self.task.model_role
            while True:
                msg = read_message(sock)
                if isinstance(msg, ParamsMessage):
                    if msg.round != expected_round:
                        raise ProtocolError(f"expected round {expected_round}, server sent round {msg.round}")
                    load_parameters(self.system, role, msg.params)
                    num_examples = self._train_round(msg.round)
                    send_message(
                        sock,
                        UpdateMessage(msg.round, extract_parameters(self.system, role), num_examples),
                    )
                    logger.info("client %s sent round %d update (%d examples)", self.client_id, msg.round, num_examples)
                    self.rounds_trained = msg.round
                    expected_round += 1
                elif isinstance(msg, DoneMessage):
                    load_parameters(self.system, role, msg.params)
                    return msg.params
                elif isinstance(msg, ErrorMessage):
                    raise RemoteAbort(msg.code, msg.detail)
                else:
                    raise ProtocolError(f"unexpected {type(msg).__name__} from server")


def run_client(
    task: FLTask,
    system: RAGSystem,
    train_dataset: Sequence[TrainExample],
    server_address: Tuple[str, int],
    *,
    client_id: str = "client-0",
) -> ModelParameters:
    return task.client(system, train_dataset, server_address, client_id=client_id).run()
