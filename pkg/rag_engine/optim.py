"""Column-restricted gradients and plain SGD.

Both objectives only touch the weight columns of features present in the
current text, so gradients carry those columns alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class ColumnGradient:
    columns: np.ndarray  # ascending unique column indices, int64
    values: np.ndarray   # rows x len(columns), float64
    shape: Tuple[int, int]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        if self.columns.size:
            out[:, self.columns] = self.values
        return out

    @staticmethod
    def mean(grads: Sequence["ColumnGradient"]) -> "ColumnGradient":
        """Average of gradients over the union of their columns, summed in input order."""
        if not grads:
            raise ValueError("mean() needs at least one gradient")
        if len(grads) == 1:
            return grads[0]
        shape = grads[0].shape
        columns = np.unique(np.concatenate([g.columns for g in grads]))
        block = np.zeros((shape[0], columns.size), dtype=np.float64)
        for g in grads:
            if g.shape != shape:
                raise ValueError("cannot average gradients of different shapes")
            block[:, np.searchsorted(columns, g.columns)] += g.values
        return ColumnGradient(columns=columns, values=block / len(grads), shape=shape)


def sgd_update(weights: np.ndarray, grad: ColumnGradient, learning_rate: float) -> None:
    """In place W <- W - lr * grad, computed in float64 and stored in W's dtype."""
    if tuple(weights.shape) != tuple(grad.shape):
        raise ValueError(f"gradient shape {grad.shape} does not match weights {weights.shape}")
    if grad.columns.size == 0:
        return
    cols = grad.columns
    updated = weights[:, cols].astype(np.float64) - float(learning_rate) * grad.values
    weights[:, cols] = updated.astype(weights.dtype)
