import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rag_engine.errors import ShapeMismatch
from rag_engine.params import ModelParameters
from rag_fl.aggregation import fedavg
from rag_fl.errors import ZeroExamples
from rag_fl.models import ClientUpdate


def _update(cid: str, values, n: int, rnd: int = 1) -> ClientUpdate:
    return ClientUpdate(rnd, ModelParameters({"w": np.asarray(values, dtype=np.float32)}), n, cid)


def test_weighted_mean():
    out = fedavg([_update("a", [1.0, 0.0], 1), _update("b", [4.0, 2.0], 3)])
    assert out["w"].tolist() == [3.25, 1.5]
    assert out["w"].dtype == np.float32


def test_worked_weighted_mean():
    out = fedavg([_update("a", [2.0, 4.0], 1), _update("b", [4.0, 8.0], 3)])
    assert out["w"].tolist() == [3.5, 7.0]


def test_single_client_is_identity():
    values = np.random.default_rng(0).standard_normal(10).astype(np.float32)
    out = fedavg([_update("a", values, 7)])
    assert np.array_equal(out["w"], values)


def test_zero_example_clients_drop_out():
    out = fedavg([_update("a", [1.0], 0), _update("b", [5.0], 2)])
    assert out["w"].tolist() == [5.0]


def test_all_zero_examples():
    with pytest.raises(ZeroExamples):
        fedavg([_update("a", [1.0], 0), _update("b", [5.0], 0)])


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        fedavg([_update("a", [1.0], 1), _update("b", [1.0, 2.0], 1)])


def test_rejects_empty_and_mixed_rounds():
    with pytest.raises(ValueError):
        fedavg([])
    with pytest.raises(ValueError):
        fedavg([_update("a", [1.0], 1, rnd=1), _update("b", [1.0], 1, rnd=2)])


def test_result_does_not_depend_on_arrival_order():
    rng = np.random.default_rng(3)
    updates = [_update(f"c{i}", rng.standard_normal(50), int(rng.integers(1, 9))) for i in range(6)]
    forward = fedavg(updates)
    backward = fedavg(list(reversed(updates)))
    assert forward == backward


grid = st.integers(min_value=-512, max_value=512).map(lambda k: k / 256.0)


@settings(max_examples=50, deadline=None)
@given(
    rows=st.lists(st.tuples(st.lists(grid, min_size=3, max_size=3), st.integers(1, 20)), min_size=1, max_size=5),
    scale=st.integers(1, 8),
)
def test_scaling_all_counts_leaves_average_unchanged(rows, scale):
    base = [_update(f"c{i}", v, n) for i, (v, n) in enumerate(rows)]
    scaled = [_update(f"c{i}", v, n * scale) for i, (v, n) in enumerate(rows)]
    assert np.allclose(fedavg(base)["w"], fedavg(scaled)["w"], rtol=0, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(values=st.lists(grid, min_size=1, max_size=8), n=st.integers(1, 1000), clients=st.integers(1, 5))
def test_identical_clients_average_to_themselves(values, n, clients):
    updates = [_update(f"c{i}", values, n) for i in range(clients)]
    assert fedavg(updates)["w"].tolist() == [float(np.float32(v)) for v in values]
