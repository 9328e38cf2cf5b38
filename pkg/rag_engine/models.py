from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np

from .errors import ConfigError, TemplateError

GenerationMode = Literal["greedy", "sample"]
ModelRole = Literal["retriever", "generator"]
KLDirection = Literal["lm_to_retriever", "retriever_to_lm"]
AggMode = Literal["avg", "sum", "max"]

MODEL_ROLES: Tuple[str, ...] = ("retriever", "generator")
KL_DIRECTIONS: Tuple[str, ...] = ("lm_to_retriever", "retriever_to_lm")
AGG_MODES: Tuple[str, ...] = ("avg", "sum", "max")

PLACEHOLDER = re.compile(r"\{(context|query)\}")


def check_prompt_template(template: str) -> None:
    found = PLACEHOLDER.findall(template)
    for name in ("context", "query"):
        n = found.count(name)
        if n != 1:
            raise TemplateError(f"prompt_template must contain {{{name}}} exactly once (found {n})")


def _joined(title: str, section: str, text: str) -> str:
    return f"{title} {section} {text}"


@dataclass(frozen=True)
class CorpusRecord:
    """One ingestion line: the three text fields of a chunk, not yet embedded."""
    id: str
    title: str = ""
    section: str = ""
    text: str = ""

    @property
    def full_text(self) -> str:
        return _joined(self.title, self.section, self.text)


@dataclass(frozen=True)
class KnowledgeChunk:
    id: str
    title: str
    section: str
    text: str
    embedding: np.ndarray = field(compare=False, repr=False)

    @property
    def full_text(self) -> str:
        return _joined(self.title, self.section, self.text)


@dataclass(frozen=True)
class RetrievalResult:
    chunk_id: str
    score: float


@dataclass(frozen=True)
class RAGConfig:
    top_k: int = 2
    context_separator: str = "\n"
    prompt_template: str = "{context}\n\n{query}"
    max_context_chars: Optional[int] = None

    def __post_init__(self) -> None:
        if int(self.top_k) < 1:
            raise ConfigError("top_k must be a positive integer")
        if self.max_context_chars is not None and int(self.max_context_chars) < 1:
            raise ConfigError("max_context_chars must be positive when set")
        check_prompt_template(self.prompt_template)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "RAGConfig":
        known = {"top_k", "context_separator", "prompt_template", "max_context_chars"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown rag config keys: {sorted(unknown)}")
        defaults = RAGConfig()
        return RAGConfig(
            top_k=int(data.get("top_k", defaults.top_k)),
            context_separator=str(data.get("context_separator", defaults.context_separator)),
            prompt_template=str(data.get("prompt_template", defaults.prompt_template)),
            max_context_chars=data.get("max_context_chars"),
        )


@dataclass(frozen=True)
class RAGResponse:
    text: str
    retrieved: List[RetrievalResult]
    prompt: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "text": self.text,
            "retrieved": [{"chunk_id": r.chunk_id, "score": r.score} for r in self.retrieved],
            "prompt": self.prompt,
        }


@dataclass(frozen=True)
class GenerationConfig:
    max_tokens: int = 16
    mode: GenerationMode = "greedy"
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.max_tokens) < 0:
            raise ConfigError("max_tokens must be >= 0")
        if self.mode not in ("greedy", "sample"):
            raise ConfigError(f"unknown generation mode {self.mode!r}")
        if self.mode == "sample" and not float(self.temperature) > 0.0:
            raise ConfigError("temperature must be > 0 when sampling")


@dataclass(frozen=True)
class TrainExample:
    query: str
    response: str

    def __post_init__(self) -> None:
        if not self.query:
            raise ConfigError("train example query must be non-empty")


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters shared by both trainers.

    lsr_kl_direction and lsr_length_normalize only affect the retriever
    trainer; see trainers.lsr_loss_and_grad.
    """
    learning_rate: float = 0.1
    epochs: int = 1
    batch_size: int = 1
    seed: int = 0
    lsr_tau: float = 1.0
    lsr_kl_direction: KLDirection = "lm_to_retriever"
    lsr_length_normalize: bool = False

    def __post_init__(self) -> None:
        if not (float(self.learning_rate) > 0.0 and math.isfinite(self.learning_rate)):
            raise ConfigError("learning_rate must be a positive finite number")
        if int(self.epochs) < 1:
            raise ConfigError("epochs must be a positive integer")
        if int(self.batch_size) < 1:
            raise ConfigError("batch_size must be a positive integer")
        if not float(self.lsr_tau) > 0.0:
            raise ConfigError("lsr_tau must be positive")
        if self.lsr_kl_direction not in KL_DIRECTIONS:
            raise ConfigError(f"unknown KL direction {self.lsr_kl_direction!r}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "TrainConfig":
        return TrainConfig(**data)


@dataclass(frozen=True)
class TrainResult:
    losses_per_epoch: List[float]
    examples_seen: int
    skipped: int = 0

    def __post_init__(self) -> None:
        if not all(math.isfinite(x) for x in self.losses_per_epoch):
            raise ValueError("training produced a non-finite loss")


@dataclass(frozen=True)
class BenchmarkExample:
    query: str
    response: str
    choices: Optional[List[str]] = None

    def __post_init__(self) -> None:
        if not self.response:
            raise ConfigError("benchmark response must be non-empty")
        if self.choices is not None and self.response not in self.choices:
            raise ConfigError("benchmark response must be one of the choices")

    @property
    def prompt(self) -> str:
        """Query text with choices appended as "(A) ..." lines."""
        if not self.choices:
            return self.query
        lines = [self.query]
        for i, choice in enumerate(self.choices):
            lines.append(f"({_choice_label(i)}) {choice}")
        return "\n".join(lines)


def _choice_label(i: int) -> str:
    label = ""
    i += 1
    while i:
        i, rem = divmod(i - 1, 26)
        label = chr(ord("A") + rem) + label
    return label


@dataclass(frozen=True)
class EvaluationResult:
    per_example_scores: List[float]
    aggregate: float
    num_examples: int
    agg_mode: str
    predictions: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
