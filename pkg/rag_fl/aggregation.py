from __future__ import annotations

from typing import Dict, Sequence

import numpy as np

from rag_engine.params import ModelParameters

from .errors import ShapeMismatch, ZeroExamples
from .models import ClientUpdate


def fedavg(updates: Sequence[ClientUpdate]) -> ModelParameters:
    """Example-weighted mean sum_k n_k w_k / sum_k n_k.

    Accumulates in float64 with clients in ascending client_id order and
    stores the result as float32.
    """
    if not updates:
        raise ValueError("fedavg needs at least one update")
    if len({u.round for u in updates}) != 1:
        raise ValueError("updates come from different rounds")
    ordered = sorted(updates, key=lambda u: u.client_id)
    shapes = ordered[0].params.shapes()
    for u in ordered[1:]:
        if u.params.shapes() != shapes:
            raise ShapeMismatch(
                f"client {u.client_id!r} sent {u.params.shapes()}, expected {shapes}"
            )
    total = sum(int(u.num_examples) for u in ordered)
    if total == 0:
        raise ZeroExamples(f"all {len(ordered)} clients reported zero examples in round {ordered[0].round}")

    out: Dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        acc = np.zeros(shape, dtype=np.float64)
        for u in ordered:
            if u.num_examples:
                acc += float(u.num_examples) * u.params[name].astype(np.float64)
        out[name] = (acc / float(total)).astype(np.float32)
    return ModelParameters(out)
