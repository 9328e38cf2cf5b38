"""Synthetic fact corpora and hand-built models for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .generator import EOS_ID, LogLinearLM, Vocab, build_vocab
from .models import BenchmarkExample, CorpusRecord, TrainExample
from .text import feature_index

ATTRIBUTES: Dict[str, Tuple[str, ...]] = {
    "color": ("red", "blue", "green", "yellow", "purple"),
    "city": ("paris", "tokyo", "lima", "oslo", "cairo"),
    "animal": ("fox", "owl", "bear", "wolf", "hare"),
    "metal": ("iron", "gold", "tin", "zinc", "lead"),
}
ATTRIBUTE_ORDER: Tuple[str, ...] = ("color", "city", "animal", "metal")

KEPT_WORDS: Tuple[str, ...] = (
    "amber", "basil", "cedar", "delta", "ember", "fable", "garnet", "harbor",
    "indigo", "juniper", "kettle", "lantern", "meadow", "nectar", "orchid", "pepper",
)


def entity_name(i: int) -> str:
    return f"item{i:03d}"


@dataclass(frozen=True)
class FactTask:
    """One fact chunk per entity; the first entities train, the next ones are held out."""
    corpus: List[CorpusRecord]
    train: List[TrainExample]
    benchmark: List[BenchmarkExample]
    gold_chunks: Dict[str, str]  # query -> chunk id

    def vocab_texts(self) -> List[str]:
        return [r.full_text for r in self.corpus] + [ex.query for ex in self.train] + [ex.query for ex in self.benchmark]

    def build_vocab(self, max_size: int = 1024) -> Vocab:
        return build_vocab(self.vocab_texts(), max_size)


def fact_task(num_entities: int = 200, num_train: int = 100, num_eval: int = 50) -> FactTask:
    """Entity i has attribute ATTRIBUTE_ORDER[i % 4] with value index (i // 4) % 5.

    Chunk: title = entity, section = attribute, text = value.
    Query: "what <attribute> is <entity>", response: the value.
    """
    if num_train + num_eval > num_entities:
        raise ValueError("train and eval entities must fit in the corpus")
    corpus: List[CorpusRecord] = []
    pairs: List[Tuple[str, str, str]] = []
    for i in range(num_entities):
        kind = ATTRIBUTE_ORDER[i % len(ATTRIBUTE_ORDER)]
        values = ATTRIBUTES[kind]
        answer = values[(i // len(ATTRIBUTE_ORDER)) % len(values)]
        name = entity_name(i)
        chunk_id = f"fact-{i:03d}"
        corpus.append(CorpusRecord(id=chunk_id, title=name, section=kind, text=answer))
        pairs.append((f"what {kind} is {name}", answer, chunk_id))
    train = [TrainExample(query=q, response=a) for q, a, _ in pairs[:num_train]]
    held_out = pairs[num_train : num_train + num_eval]
    benchmark = [BenchmarkExample(query=q, response=a) for q, a, _ in held_out]
    gold = {q: cid for q, _, cid in pairs[: num_train + num_eval]}
    return FactTask(corpus=corpus, train=train, benchmark=benchmark, gold_chunks=gold)


@dataclass(frozen=True)
class CopyTask:
    """Exactly one chunk holds each answer word."""
    corpus: List[CorpusRecord]
    train: List[TrainExample]
    gold_pairs: List[Tuple[str, str]]  # (query, chunk id)

    def build_vocab(self, max_size: int = 256) -> Vocab:
        texts = [r.full_text for r in self.corpus] + [ex.query for ex in self.train]
        return build_vocab(texts, max_size)


def copy_task(num_entities: int = 16) -> CopyTask:
    if num_entities > len(KEPT_WORDS):
        raise ValueError(f"at most {len(KEPT_WORDS)} entities")
    corpus: List[CorpusRecord] = []
    train: List[TrainExample] = []
    gold: List[Tuple[str, str]] = []
    for i in range(num_entities):
        name = entity_name(i)
        word = KEPT_WORDS[i]
        chunk_id = f"word-{i:02d}"
        corpus.append(CorpusRecord(id=chunk_id, title=name, section="word", text=word))
        query = f"what word does {name} keep"
        train.append(TrainExample(query=query, response=word))
        gold.append((query, chunk_id))
    return CopyTask(corpus=corpus, train=train, gold_pairs=gold)


def copy_generator(
    vocab: Vocab,
    features: int,
    words: Sequence[str],
    *,
    strength: float = 8.0,
    dtype: type = np.float32,
) -> LogLinearLM:
    """Generator that repeats a listed word seen in the prompt, then stops.

    W[w, col(w)] = strength and W[EOS, col("prev1=w")] = strength for every
    listed word w; all other weights are zero.
    """
    w = np.zeros((len(vocab), features), dtype=np.float64)
    for word in words:
        tid = vocab.token_to_id.get(word)
        if tid is None:
            raise ValueError(f"{word!r} is not in the vocabulary")
        w[tid, feature_index(word, features)] = strength
        w[EOS_ID, feature_index(f"prev1={word}", features)] = strength
    return LogLinearLM(vocab=vocab, weights=w.astype(dtype))
