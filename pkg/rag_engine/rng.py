from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_U64_MASK = np.uint64(MASK64)


def splitmix64_mix(z: int) -> int:
    """Finalizer of splitmix64 applied to an already-advanced state."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_mix_np(z: np.ndarray) -> np.ndarray:
    """Vectorized finalizer for uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9) & _U64_MASK
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB) & _U64_MASK
    return z ^ (z >> np.uint64(31))


@dataclass
class SplitMix64:
    """Seedable splitmix64 stream with an inspectable trace.

    - no globals
    - bit-exact with any other splitmix64 implementation for the same seed
    - records labelled random decisions for debugging and tests
    """
    seed: int = 0
    trace: List[Dict[str, str]] = field(default_factory=list)
    _state: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._state = int(self.seed) & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return splitmix64_mix(self._state)

    def random(self, label: str = "random") -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        v = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        self.trace.append({"op": label, "value": f"{v:.10f}"})
        return v

    def below(self, n: int, label: str = "below") -> int:
        """Integer in [0, n) as next_u64() mod n."""
        if n <= 0:
            raise ValueError("below() requires n > 0")
        v = self.next_u64() % n
        self.trace.append({"op": label, "value": str(v), "range": f"0-{n - 1}"})
        return v

    def uniform_array(self, n: int, bound: float, label: str = "uniform_array") -> np.ndarray:
        """n float64 draws uniform in [-bound, +bound], in stream order.

        Equivalent to n calls of (2 * u - 1) * bound with u from the top 53
        bits, computed with numpy since splitmix64 is counter based.
        """
        if n < 0:
            raise ValueError("uniform_array() requires n >= 0")
        counters = np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self._state) + counters * np.uint64(GOLDEN_GAMMA)
        bits = splitmix64_mix_np(states)
        u = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        self._state = (self._state + n * GOLDEN_GAMMA) & MASK64
        self.trace.append({"op": label, "n": str(n), "bound": f"{bound:.10f}"})
        return (2.0 * u - 1.0) * bound

    def permutation(self, n: int, label: str = "permutation") -> List[int]:
        """Fisher-Yates from the top: for i = n-1..1 swap i with below(i + 1)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            order[i], order[j] = order[j], order[i]
        self.trace.append({"op": label, "len": str(n)})
        return order

    def sample_indices(self, n: int, k: int, label: str = "sample") -> List[int]:
        """k distinct indices from range(n): partial Fisher-Yates from the front."""
        if not 0 <= k <= n:
            raise ValueError("sample_indices requires 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.next_u64() % (n - i)
            pool[i], pool[j] = pool[j], pool[i]
        self.trace.append({"op": label, "k": str(k), "len": str(n)})
        return pool[:k]

    def categorical(self, probs: Sequence[float], label: str = "categorical") -> int:
        """Index drawn from probs by inverse CDF; falls through to the last index."""
        if len(probs) == 0:
            raise ValueError("categorical requires non-empty probs")
        r = self.random(label=f"{label}:u")
        upto = 0.0
        last = len(probs) - 1
        for i, p in enumerate(probs):
            p = float(p)
            if p > 0.0:
                last = i
            upto += p
            if r < upto:
                self.trace.append({"op": label, "index": str(i)})
                return i
        # numeric edge: cumulative sum fell short of r
        self.trace.append({"op": label, "note": "fell_through_last"})
        return last
