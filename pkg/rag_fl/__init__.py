"""Synchronous FedAvg for the RAG engine's trainers.

Key exports:
    - get_federated_task: FLTask from a RAGTrainerManager
    - FedAvgServer / run_server, FedAvgClient / run_client
    - fedavg: example-weighted parameter averaging
    - encode_frame / decode_frame: wire codec
"""

from .aggregation import fedavg
from .client import FedAvgClient, run_client
from .codec import decode_frame, encode_frame
from .errors import BindError, ClientDropped, ProtocolError, RemoteAbort, ZeroExamples
from .models import (
    ClientUpdate,
    DoneMessage,
    ErrorMessage,
    FLTask,
    JoinMessage,
    ParamsMessage,
    UpdateMessage,
    parse_address,
)
from .server import FedAvgServer, run_server
from .task import get_federated_task

__all__ = [
    "FLTask",
    "ClientUpdate",
    "JoinMessage",
    "ParamsMessage",
    "UpdateMessage",
    "DoneMessage",
    "ErrorMessage",
    "fedavg",
    "encode_frame",
    "decode_frame",
    "FedAvgServer",
    "FedAvgClient",
    "run_server",
    "run_client",
    "get_federated_task",
    "parse_address",
    "BindError",
    "ClientDropped",
    "ProtocolError",
    "RemoteAbort",
    "ZeroExamples",
]
