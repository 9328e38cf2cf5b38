import socket
import threading
import time
from typing import Optional

import numpy as np
import pytest

from rag_engine.errors import ConfigError, MissingTrainer, ShapeMismatch
from rag_engine.models import TrainConfig
from rag_engine.params import ModelParameters, extract_parameters
from rag_engine.trainers import RAGTrainerManager, RALTGeneratorTrainer, build_trainer
from rag_fl import FLTask, get_federated_task
from rag_fl.codec import read_message, send_message
from rag_fl.errors import BindError, ClientDropped, ProtocolError, RemoteAbort, ZeroExamples
from rag_fl.models import ErrorMessage, JoinMessage, ParamsMessage

from conftest import TRAIN

WAIT = 30.0


class _Runner(threading.Thread):
    """Runs a blocking call and keeps its result or exception."""

    def __init__(self, fn) -> None:
        super().__init__(daemon=True)
        self.fn = fn
        self.result = None
        self.error: Optional[BaseException] = None

    def run(self) -> None:
        try:
            self.result = self.fn()
        except BaseException as e:
            self.error = e

    def finish(self):
        self.join(WAIT)
        assert not self.is_alive(), "timed out"
        return self


def _start_server(server) -> _Runner:
    runner = _Runner(server.serve)
    runner.start()
    assert server.ready.wait(WAIT)
    return runner


def _wait_for(cond) -> None:
    deadline = time.monotonic() + WAIT
    while not cond():
        assert time.monotonic() < deadline, "timed out"
        time.sleep(0.01)


def _connect(server) -> socket.socket:
    sock = socket.create_connection(server.address, timeout=WAIT)
    return sock


@pytest.mark.parametrize("role,rounds", [("generator", 3), ("retriever", 2)])
def test_single_client_matches_centralized_training(make_system, role, rounds):
    central = make_system(top_k=3)
    build_trainer(role, central, TRAIN, TrainConfig(epochs=rounds, seed=2, learning_rate=0.2)).train()

    task = FLTask(role, TrainConfig(epochs=1, seed=2, learning_rate=0.2))
    seen_rounds = []
    server = task.server(
        extract_parameters(make_system(top_k=3), role),
        rounds=rounds,
        expected_clients=1,
        on_round=lambda r, p: seen_rounds.append(r),
    )
    runner = _start_server(server)
    client = task.client(make_system(top_k=3), TRAIN, server.address, client_id="solo")
    final = client.run()
    runner.finish()

    assert runner.error is None
    assert seen_rounds == list(range(1, rounds + 1))
    assert server.rounds_completed == rounds
    assert client.rounds_trained == rounds
    assert final == runner.result
    assert final == extract_parameters(central, role)


def test_identical_clients_agree_with_one_client(make_system):
    central = make_system()
    build_trainer("generator", central, TRAIN, TrainConfig(epochs=2)).train()

    task = FLTask("generator", TrainConfig(epochs=1))
    server = task.server(extract_parameters(make_system(), "generator"), rounds=2, expected_clients=2)
    runner = _start_server(server)
    clients = [
        _Runner(task.client(make_system(), TRAIN, server.address, client_id=f"site-{i}").run) for i in range(2)
    ]
    for c in clients:
        c.start()
    for c in clients:
        assert c.finish().error is None
    runner.finish()
    assert runner.error is None
    assert clients[0].result == clients[1].result == extract_parameters(central, "generator")


def test_dropped_client_aborts_session(make_system):
    task = FLTask("generator", TrainConfig())
    server = task.server(extract_parameters(make_system(), "generator"), rounds=2, expected_clients=1)
    runner = _start_server(server)
    with _connect(server) as sock:
        send_message(sock, JoinMessage("flaky"))
        assert isinstance(read_message(sock), ParamsMessage)
    runner.finish()
    assert isinstance(runner.error, ClientDropped)
    assert server.rounds_completed == 0


def test_dropped_client_aborts_the_others(make_system):
    task = FLTask("generator", TrainConfig())
    server = task.server(extract_parameters(make_system(), "generator"), rounds=2, expected_clients=2)
    runner = _start_server(server)
    steady = task.client(make_system(), TRAIN, server.address, client_id="steady")
    survivor = _Runner(steady.run)
    survivor.start()
    _wait_for(lambda: server.joined == ["steady"])
    with _connect(server) as sock:
        send_message(sock, JoinMessage("flaky"))
        assert isinstance(read_message(sock), ParamsMessage)
    survivor.finish()
    runner.finish()

    assert isinstance(runner.error, ClientDropped)
    assert isinstance(survivor.error, RemoteAbort)
    assert survivor.error.code == "client_dropped"
    assert steady.rounds_trained == 1
    assert server.rounds_completed == 0


def test_all_clients_without_data(make_system):
    task = FLTask("generator", TrainConfig())
    server = task.server(extract_parameters(make_system(), "generator"), rounds=1, expected_clients=2)
    runner = _start_server(server)
    clients = [_Runner(task.client(make_system(), [], server.address, client_id=f"c{i}").run) for i in range(2)]
    for c in clients:
        c.start()
    for c in clients:
        c.finish()
        assert isinstance(c.error, RemoteAbort)
        assert c.error.code == "zero_examples"
    runner.finish()
    assert isinstance(runner.error, ZeroExamples)


def test_duplicate_client_id_is_rejected(make_system):
    task = FLTask("generator", TrainConfig())
    server = task.server(extract_parameters(make_system(), "generator"), rounds=1, expected_clients=2)
    runner = _start_server(server)
    first = _connect(server)
    send_message(first, JoinMessage("a"))
    _wait_for(lambda: server.joined == ["a"])
    with _connect(server) as dup:
        send_message(dup, JoinMessage("a"))
        reply = read_message(dup)
    assert isinstance(reply, ErrorMessage) and reply.code == "protocol_error"
    first.close()
    with _connect(server) as second:
        send_message(second, JoinMessage("b"))
    runner.finish()
    assert isinstance(runner.error, ClientDropped)


def test_client_rejects_out_of_order_round(make_system):
    system = make_system()
    listener = socket.create_server(("127.0.0.1", 0))
    address = listener.getsockname()[:2]

    def fake_server():
        conn, _ = listener.accept()
        with conn:
            read_message(conn)
            send_message(conn, ParamsMessage(2, extract_parameters(system, "generator")))
            conn.recv(1)

    fake = _Runner(fake_server)
    fake.start()
    task = FLTask("generator", TrainConfig())
    with pytest.raises(ProtocolError):
        task.client(make_system(), TRAIN, address).run()
    fake.finish()
    listener.close()


def test_client_without_server():
    with socket.create_server(("127.0.0.1", 0)) as spare:
        address = spare.getsockname()[:2]
    task = FLTask("generator", TrainConfig())
    from rag_fl.client import FedAvgClient

    client = FedAvgClient(task, None, TRAIN, address, connect_timeout=2.0)  # type: ignore[arg-type]
    with pytest.raises(ConnectionError):
        client.run()


def test_busy_port_is_a_bind_error(make_system):
    with socket.create_server(("127.0.0.1", 0)) as holder:
        port = holder.getsockname()[1]
        task = FLTask("generator", TrainConfig())
        server = task.server(extract_parameters(make_system(), "generator"), rounds=1, expected_clients=1, port=port)
        with pytest.raises(BindError):
            server.serve()
        assert server.ready.is_set()


def test_server_validates_its_arguments(make_system):
    task = FLTask("generator", TrainConfig())
    params = extract_parameters(make_system(), "generator")
    with pytest.raises(ConfigError):
        task.server(params, rounds=0, expected_clients=1)
    with pytest.raises(ConfigError):
        task.server(params, rounds=1, expected_clients=0)
    with pytest.raises(ShapeMismatch):
        task.server(ModelParameters({"other": np.zeros(2)}), rounds=1, expected_clients=1)
    with pytest.raises(ConfigError):
        FLTask("both", TrainConfig())


def test_federated_task_from_manager(make_system):
    cfg = TrainConfig(epochs=4, learning_rate=0.05)
    manager = RAGTrainerManager("generator", generator_trainer=RALTGeneratorTrainer(make_system(), TRAIN, cfg))
    task = get_federated_task(manager)
    assert task == FLTask("generator", cfg)
    with pytest.raises(MissingTrainer):
        get_federated_task(RAGTrainerManager("retriever"))
