"""Synchronous FedAvg server over TCP.

Session: accept exactly C JOINs, then for each of R rounds broadcast PARAMS,
collect one UPDATE per client and aggregate; finally broadcast DONE. Any
failure aborts every client with an ERROR frame and no partial aggregate
is kept.
"""

from __future__ import annotations

import asyncio
import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from rag_engine.errors import ConfigError, FrameTooLarge, MalformedFrame, RagEngineError
from rag_engine.params import ROLE_TENSORS, ModelParameters

from .aggregation import fedavg
from .codec import read_message_async, write_message_async
from .errors import BindError, ClientDropped, ProtocolError, ShapeMismatch, error_code
from .models import (
    ClientUpdate,
    DoneMessage,
    ErrorMessage,
    FLMessage,
    FLTask,
    JoinMessage,
    ParamsMessage,
    RoundCallback,
    UpdateMessage,
    parse_address,
)

logger = logging.getLogger(__name__)

_LINK_ERRORS = (ConnectionError, MalformedFrame, FrameTooLarge)


@dataclass
class _Connection:
    client_id: str
    reader: asyncio.StreamReader
    writer: asyncio.StreamWriter


class FedAvgServer:
    """One federated session; `ready` is set once `address` holds the bound socket."""

    def __init__(
        self,
        task: FLTask,
        initial_params: ModelParameters,
        *,
        rounds: int,
        expected_clients: int,
        host: str = "127.0.0.1",
        port: int = 0,
        on_round: Optional[RoundCallback] = None,
    ) -> None:
        if rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if expected_clients < 1:
            raise ConfigError("expected_clients must be >= 1")
        expected = sorted(ROLE_TENSORS[task.model_role])
        if initial_params.names() != expected:
            raise ShapeMismatch(
                f"{task.model_role} task needs tensors {expected}, got {initial_params.names()}"
            )
        self.task = task
        self.initial_params = initial_params
        self.rounds = rounds
        self.expected_clients = expected_clients
        self.host = host
        self.port = port
        self.on_round = on_round
        self.ready = threading.Event()
        self.address: Optional[Tuple[str, int]] = None
        self.rounds_completed = 0
        self._clients: Dict[str, _Connection] = {}

    @property
    def joined(self) -> List[str]:
        """Ids of the clients that have joined so far."""
        return sorted(self._clients)

    def serve(self) -> ModelParameters:
        return asyncio.run(self.serve_async())

    async def serve_async(self) -> ModelParameters:
        self._pending: asyncio.Queue = asyncio.Queue()
        self._clients = {}
        self._finished = asyncio.Event()
        self._accepting = True
        try:
            server = await asyncio.start_server(self._handle_connection, self.host, self.port)
        except OSError as e:
            self.ready.set()
            raise BindError(f"cannot listen on {self.host}:{self.port}: {e}") from e
        sockname = server.sockets[0].getsockname()
        self.address = (sockname[0], int(sockname[1]))
        logger.info("listening on %s:%d for %d clients", self.address[0], self.address[1], self.expected_clients)
        self.ready.set()

        conns: List[_Connection] = []
        try:
            conns = await self._wait_for_clients()
            params = self.initial_params
            for rnd in range(1, self.rounds + 1):
                params = await self._run_round(conns, rnd, params)
                self.rounds_completed = rnd
                if self.on_round is not None:
                    self.on_round(rnd, params)
            await self._broadcast(conns, DoneMessage(params))
            logger.info("session done after %d rounds", self.rounds)
            return params
        except RagEngineError as e:
            logger.error("aborting session: %s", e)
            await self._abort(list(self._clients.values()), e)
            raise
        finally:
            self._accepting = False
            self._finished.set()
            for c in self._clients.values():
                c.writer.close()
            server.close()
            await server.wait_closed()

    async def _handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            msg = await read_message_async(reader)
        except _LINK_ERRORS as e:
            logger.warning("connection dropped before JOIN: %s", e)
            writer.close()
            return
        reason = None
        if not isinstance(msg, JoinMessage):
            reason = f"expected join, got {type(msg).__name__}"
        elif not self._accepting or len(self._clients) >= self.expected_clients:
            reason = "session is full"
        elif msg.client_id in self._clients:
            reason = f"client id {msg.client_id!r} already joined"
        if reason is not None:
            logger.warning("rejecting connection: %s", reason)
            await self._send_quietly(writer, ErrorMessage("protocol_error", reason))
            writer.close()
            return
        conn = _Connection(msg.client_id, reader, writer)
        self._clients[msg.client_id] = conn
        logger.info("client %s joined (%d/%d)", msg.client_id, len(self._clients), self.expected_clients)
        await self._pending.put(conn)
        # keep the handler alive for the whole session
        await self._finished.wait()

    async def _wait_for_clients(self) -> List[_Connection]:
        conns = [await self._pending.get() for _ in range(self.expected_clients)]
        self._accepting = False
        return sorted(conns, key=lambda c: c.client_id)

    async def _run_round(self, conns: List[_Connection], rnd: int, params: ModelParameters) -> ModelParameters:
        await self._broadcast(conns, ParamsMessage(rnd, params))
        replies = await asyncio.gather(*(read_message_async(c.reader) for c in conns), return_exceptions=True)
        updates: List[ClientUpdate] = []
        for conn, reply in zip(conns, replies):
            if isinstance(reply, _LINK_ERRORS):
                raise ClientDropped(f"client {conn.client_id} dropped in round {rnd}: {reply}")
            if isinstance(reply, BaseException):
                raise reply
            if isinstance(reply, ErrorMessage):
                raise ClientDropped(f"client {conn.client_id} failed in round {rnd}: {reply.code}: {reply.detail}")
            if not isinstance(reply, UpdateMessage):
                raise ProtocolError(f"client {conn.client_id} sent {type(reply).__name__} in round {rnd}")
            if reply.round != rnd:
                raise ProtocolError(f"client {conn.client_id} answered round {reply.round} during round {rnd}")
            if reply.params.shapes() != params.shapes():
                raise ShapeMismatch(f"client {conn.client_id} sent {reply.params.shapes()}, expected {params.shapes()}")
            if reply.num_examples < 0:
                raise ProtocolError(f"client {conn.client_id} reported negative num_examples")
            updates.append(ClientUpdate(rnd, reply.params, reply.num_examples, conn.client_id))
        aggregated = fedavg(updates)
        logger.info(
            "round %d aggregated %d updates over %d examples, l2=%.6f",
            rnd,
            len(updates),
            sum(u.num_examples for u in updates),
            aggregated.l2_norm(),
        )
        return aggregated

    async def _broadcast(self, conns: List[_Connection], msg: FLMessage) -> None:
        for conn in conns:
            try:
                await write_message_async(conn.writer, msg)
            except ConnectionError as e:
                raise ClientDropped(f"client {conn.client_id} dropped: {e}") from e

    async def _abort(self, conns: List[_Connection], exc: BaseException) -> None:
        msg = ErrorMessage(error_code(exc), str(exc))
        for conn in conns:
            await self._send_quietly(conn.writer, msg)

    @staticmethod
    async def _send_quietly(writer: asyncio.StreamWriter, msg: FLMessage) -> None:
        try:
            await write_message_async(writer, msg)
        except (ConnectionError, OSError):
            pass


def run_server(
    task: FLTask,
    initial_params: ModelParameters,
    rounds: int,
    expected_clients: int,
    listen_address: str,
    on_round: Optional[RoundCallback] = None,
) -> ModelParameters:
    """Blocking: run one session on `host:port` and return the final parameters."""
    host, port = parse_address(listen_address)
    server = task.server(
        initial_params,
        rounds=rounds,
        expected_clients=expected_clients,
        host=host,
        port=port,
        on_round=on_round,
    )
    return server.serve()
