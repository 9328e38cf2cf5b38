import json

import numpy as np
import pytest

from rag_engine.errors import MalformedFrame
from rag_engine.params import ModelParameters
from rag_engine.wire import pack_frame
from rag_fl.codec import decode_frame, encode_frame
from rag_fl.models import DoneMessage, ErrorMessage, JoinMessage, ParamsMessage, UpdateMessage, parse_address
from rag_engine.errors import ConfigError


def _params(seed: int = 0, n: int = 6) -> ModelParameters:
    rng = np.random.default_rng(seed)
    return ModelParameters({"generator.W": rng.standard_normal((2, n // 2)).astype(np.float32)})


@pytest.mark.parametrize(
    "msg",
    [
        JoinMessage("site-a"),
        ParamsMessage(3, _params()),
        UpdateMessage(1, _params(1), 42),
        DoneMessage(_params(2)),
        ErrorMessage("zero_examples", "nobody trained"),
    ],
)
def test_every_message_survives_the_wire(msg):
    assert decode_frame(encode_frame(msg)) == msg


def test_frame_body_is_compact_json():
    frame = encode_frame(JoinMessage("a"))
    assert frame[4:] == b'{"type":"join","client_id":"a"}'
    assert int.from_bytes(frame[:4], "big") == len(frame) - 4


def test_large_tensor_is_bit_exact():
    values = np.random.default_rng(5).standard_normal(1_000_000).astype(np.float32)
    values[0] = -0.0
    msg = ParamsMessage(1, ModelParameters({"retriever.query.W": values.reshape(1000, 1000)}))
    back = decode_frame(encode_frame(msg))
    assert np.array_equal(back.params["retriever.query.W"].view(np.uint32), values.reshape(1000, 1000).view(np.uint32))


@pytest.mark.parametrize(
    "payload",
    [
        {"type": "wave"},
        {"type": "join"},
        {"type": "params", "round": "1", "tensors": []},
        {"type": "params", "round": True, "tensors": []},
        {"type": "update", "round": 1, "tensors": []},
        {"type": "done", "tensors": [{"name": "w", "shape": [2], "data": "AAAA"}]},
        {"type": "done", "tensors": "nope"},
        {"type": "error", "code": 3, "detail": ""},
    ],
)
def test_malformed_payloads(payload):
    with pytest.raises(MalformedFrame):
        decode_frame(pack_frame(payload))


def test_duplicate_tensor_names_rejected():
    one = {"name": "w", "shape": [1], "data": "AAAAAA=="}
    with pytest.raises(MalformedFrame):
        decode_frame(pack_frame({"type": "done", "tensors": [one, one]}))


def test_tensor_order_on_the_wire_is_by_name():
    params = ModelParameters({"z": np.zeros(1), "a": np.zeros(1)})
    body = json.loads(encode_frame(DoneMessage(params))[4:])
    assert [t["name"] for t in body["tensors"]] == ["a", "z"]


def test_parse_address():
    assert parse_address("127.0.0.1:8080") == ("127.0.0.1", 8080)
    assert parse_address("[::1]:0") == ("::1", 0)
    for bad in ("nohost", ":80", "h:x", "h:70000"):
        with pytest.raises(ConfigError):
            parse_address(bad)
