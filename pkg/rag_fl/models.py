from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Tuple, Union

from rag_engine.errors import ConfigError
from rag_engine.models import MODEL_ROLES, TrainConfig, TrainExample
from rag_engine.params import ModelParameters

if TYPE_CHECKING:
    from rag_engine.engine import RAGSystem

    from .client import FedAvgClient
    from .server import FedAvgServer

RoundCallback = Callable[[int, ModelParameters], None]


def parse_address(address: str) -> Tuple[str, int]:
    """"host:port" -> (host, port); the port may be 0 for an ephemeral one."""
    host, sep, port = address.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"address must be host:port, got {address!r}")
    try:
        port_num = int(port)
    except ValueError as e:
        raise ConfigError(f"bad port in {address!r}") from e
    if not 0 <= port_num <= 65535:
        raise ConfigError(f"port out of range in {address!r}")
    return host.strip("[]"), port_num


@dataclass(frozen=True)
class FLTask:
    """What a federated run trains: one model role under one TrainConfig."""
    model_role: str
    train_config: TrainConfig

    def __post_init__(self) -> None:
        if self.model_role not in MODEL_ROLES:
            raise ConfigError(f"model_role must be one of {MODEL_ROLES}, got {self.model_role!r}")

    def server(
        self,
        initial_params: ModelParameters,
        *,
        rounds: int,
        expected_clients: int,
        host: str = "127.0.0.1",
        port: int = 0,
        on_round: Optional[RoundCallback] = None,
    ) -> "FedAvgServer":
        from .server import FedAvgServer

        return FedAvgServer(
            self,
            initial_params,
            rounds=rounds,
            expected_clients=expected_clients,
            host=host,
            port=port,
            on_round=on_round,
        )

    def client(
        self,
        system: "RAGSystem",
        train_dataset: Sequence[TrainExample],
        server_address: Tuple[str, int],
        *,
        client_id: str = "client-0",
    ) -> "FedAvgClient":
        from .client import FedAvgClient

        return FedAvgClient(self, system, train_dataset, server_address, client_id=client_id)


@dataclass(frozen=True)
class ClientUpdate:
    round: int
    params: ModelParameters
    num_examples: int
    client_id: str = ""

    def __post_init__(self) -> None:
        if self.round < 1:
            raise ValueError("round must be >= 1")
        if self.num_examples < 0:
            raise ValueError("num_examples must be >= 0")


@dataclass(frozen=True)
class JoinMessage:
    client_id: str


@dataclass(frozen=True)
class ParamsMessage:
    round: int
    params: ModelParameters


@dataclass(frozen=True)
class UpdateMessage:
    round: int
    params: ModelParameters
    num_examples: int


@dataclass(frozen=True)
class DoneMessage:
    params: ModelParameters


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    detail: str


FLMessage = Union[JoinMessage, ParamsMessage, UpdateMessage, DoneMessage, ErrorMessage]
