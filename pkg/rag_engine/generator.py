"""Log-linear next-token generator over an explicit vocabulary.

Conditioning is hashed (prompt bag-of-words plus the last two history tokens);
the output side is an explicit vocabulary so generation is invertible.
Id 0 is EOS, id 1 is UNK.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import FormatError
from .models import GenerationConfig
from .optim import ColumnGradient
from .rng import SplitMix64
from .text import SparseFeatureVector, bow_features, feature_index, tokenize

EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
EOS_ID = 0
UNK_ID = 1
HISTORY_WINDOW = 2
GENERATOR_TENSOR = "generator.W"


@dataclass(frozen=True)
class Vocab:
    id_to_token: Tuple[str, ...]
    token_to_id: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        tokens = tuple(self.id_to_token)
        if len(tokens) < 2 or tokens[EOS_ID] != EOS_TOKEN or tokens[UNK_ID] != UNK_TOKEN:
            raise ValueError(f"vocab must start with {EOS_TOKEN!r}, {UNK_TOKEN!r}")
        index = {t: i for i, t in enumerate(tokens)}
        if len(index) != len(tokens):
            raise ValueError("vocab tokens must be unique")
        object.__setattr__(self, "id_to_token", tokens)
        object.__setattr__(self, "token_to_id", index)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocab:
    """Tokens ranked by (frequency desc, first occurrence asc), after EOS and UNK."""
    if max_size < 2:
        raise ValueError("max_size must be >= 2")
    counts: Counter[str] = Counter()
    first_seen: Dict[str, int] = {}
    for text in corpus:
        for tok in tokenize(text):
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return Vocab((EOS_TOKEN, UNK_TOKEN, *ranked[: max_size - 2]))


def save_vocab(path: str | Path, vocab: Vocab) -> None:
    Path(path).write_text(json.dumps(list(vocab.id_to_token), ensure_ascii=False, indent=0) + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> Vocab:
    try:
        tokens = json.loads(Path(path).read_text(encoding="utf-8"))
        return Vocab(tuple(str(t) for t in tokens))
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: not a vocab file ({e})") from e


@dataclass
class LogLinearLM:
    vocab: Vocab
    weights: np.ndarray
    history_window: int = HISTORY_WINDOW

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.vocab):
            raise ValueError(
                f"generator weights {self.weights.shape} must be |V| x F with |V| = {len(self.vocab)}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("generator weights must be finite")

    @property
    def features(self) -> int:
        return int(self.weights.shape[1])


def init_generator(vocab: Vocab, features: int, seed: int, *, dtype: type = np.float32) -> LogLinearLM:
    """Uniform weights in [-1/sqrt(F), 1/sqrt(F)], row-major, from splitmix64(seed)."""
    if features <= 0:
        raise ValueError("features must be positive")
    rng = SplitMix64(seed)
    w = rng.uniform_array(len(vocab) * features, 1.0 / math.sqrt(features), label="generator")
    return LogLinearLM(vocab=vocab, weights=w.reshape(len(vocab), features).astype(dtype))


def history_indices(history_tokens: Sequence[str], dim: int, window: int = HISTORY_WINDOW) -> List[int]:
    """Positional features "prev1=<last>", "prev2=<second-last>", ... for the window."""
    out = []
    for back in range(1, min(window, len(history_tokens)) + 1):
        out.append(feature_index(f"prev{back}={history_tokens[-back]}", dim))
    return out


def step_features(
    prompt_tokens: Sequence[str],
    history_tokens: Sequence[str],
    dim: int,
    *,
    window: int = HISTORY_WINDOW,
) -> SparseFeatureVector:
    return bow_features(prompt_tokens, dim).plus(history_indices(history_tokens, dim, window))


def _logits(weights: np.ndarray, phi: SparseFeatureVector) -> np.ndarray:
    idx, counts = phi.arrays()
    if idx.size == 0:
        return np.zeros(weights.shape[0], dtype=np.float64)
    return weights[:, idx].astype(np.float64) @ counts


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = np.max(z)
    return z - (m + np.log(np.sum(np.exp(z - m))))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def next_token_logits(lm: LogLinearLM, prompt_tokens: Sequence[str], history_tokens: Sequence[str]) -> np.ndarray:
    return _logits(lm.weights, step_features(prompt_tokens, history_tokens, lm.features, window=lm.history_window))


def _teacher_forced_steps(lm: LogLinearLM, prompt: str, target: str):
    """Yield (features, realized id) for every target token and the closing EOS."""
    base = bow_features(tokenize(prompt), lm.features)
    ids = lm.vocab.encode(tokenize(target))
    history = lm.vocab.decode(ids)
    for t in range(len(ids) + 1):
        phi = base.plus(history_indices(history[:t], lm.features, lm.history_window))
        yield phi, (ids[t] if t < len(ids) else EOS_ID)


def sequence_log_prob(lm: LogLinearLM, prompt: str, target: str) -> float:
    """Teacher-forced natural-log probability of target followed by EOS.

    Unknown target tokens score as UNK and enter the history as "<unk>".
    """
    total = 0.0
    for phi, y in _teacher_forced_steps(lm, prompt, target):
        total += float(log_softmax(_logits(lm.weights, phi))[y])
    return total


def sequence_loss_and_grad(lm: LogLinearLM, prompt: str, target: str) -> Tuple[float, ColumnGradient]:
    """Mean next-token cross-entropy over target + EOS steps and its gradient in W.

    Per step the gradient is (softmax(logits) - onehot(y)) outer phi; steps
    are averaged. Prompt tokens are conditioning only, never scored.
    """
    steps = list(_teacher_forced_steps(lm, prompt, target))
    columns = sorted({i for phi, _ in steps for i in phi.entries})
    position = {c: j for j, c in enumerate(columns)}
    block = np.zeros((lm.weights.shape[0], len(columns)), dtype=np.float64)
    nll = 0.0
    for phi, y in steps:
        idx, counts = phi.arrays()
        z = _logits(lm.weights, phi)
        logp = log_softmax(z)
        nll -= float(logp[y])
        delta = np.exp(logp)
        delta[y] -= 1.0
        if idx.size:
            block[:, [position[int(i)] for i in idx]] += np.outer(delta, counts)
    n = len(steps)
    grad = ColumnGradient(
        columns=np.asarray(columns, dtype=np.int64),
        values=block / n,
        shape=tuple(lm.weights.shape),
    )
    return nll / n, grad


def generate(lm: LogLinearLM, prompt: str, config: GenerationConfig) -> str:
    """Decode from an empty history until EOS or max_tokens.

    Greedy takes the argmax (lowest id on ties); sampling draws from
    softmax(logits / temperature) with a splitmix64 stream seeded by config.seed.
    """
    prompt_tokens = tokenize(prompt)
    rng = SplitMix64(config.seed) if config.mode == "sample" else None
    out: List[str] = []
    for _ in range(int(config.max_tokens)):
        z = next_token_logits(lm, prompt_tokens, out)
        if rng is None:
            y = int(np.argmax(z))
        else:
            y = rng.categorical(softmax(z / float(config.temperature)), label="generate")
        if y == EOS_ID:
            break
        out.append(lm.vocab.id_to_token[y])
    return " ".join(out)
