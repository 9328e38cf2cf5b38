import itertools
import math

import numpy as np
import pytest

from rag_engine.errors import ConfigError, FormatError
from rag_engine.generator import (
    EOS_ID,
    UNK_ID,
    LogLinearLM,
    Vocab,
    build_vocab,
    generate,
    history_indices,
    init_generator,
    load_vocab,
    next_token_logits,
    save_vocab,
    sequence_log_prob,
    sequence_loss_and_grad,
    step_features,
)
from rag_engine.models import GenerationConfig
from rag_engine.text import feature_index


def _vocab(*words: str) -> Vocab:
    return Vocab(("<eos>", "<unk>", *words))


def test_build_vocab_ranks_by_frequency_then_first_seen():
    v = build_vocab(["b a b", "c a b"], max_size=4)
    assert v.id_to_token == ("<eos>", "<unk>", "b", "a")
    assert v.encode(["a", "zzz"]) == [3, UNK_ID]


def test_vocab_rejects_bad_prefix_and_duplicates():
    with pytest.raises(ValueError):
        Vocab(("a", "b"))
    with pytest.raises(ValueError):
        Vocab(("<eos>", "<unk>", "x", "x"))


def test_vocab_file_roundtrip(tmp_path):
    v = _vocab("x", "y")
    save_vocab(tmp_path / "vocab.json", v)
    assert load_vocab(tmp_path / "vocab.json") == v
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(FormatError):
        load_vocab(tmp_path / "bad.json")


def test_history_features_are_positional():
    dim = 1 << 20
    assert history_indices([], dim) == []
    assert history_indices(["a"], dim) == [feature_index("prev1=a", dim)]
    assert history_indices(["a", "b", "c"], dim) == [feature_index("prev1=c", dim), feature_index("prev2=b", dim)]
    phi = step_features(["q"], ["a"], dim)
    assert phi.total() == 2.0


def test_max_tokens_zero_generates_nothing():
    lm = init_generator(_vocab("x"), 16, seed=0)
    assert generate(lm, "anything", GenerationConfig(max_tokens=0)) == ""


def test_greedy_breaks_ties_to_lowest_id():
    lm = LogLinearLM(_vocab("x", "y"), np.zeros((4, 8)))
    # all logits equal, so greedy emits EOS at once
    assert generate(lm, "prompt", GenerationConfig(max_tokens=5)) == ""


def test_greedy_emits_until_eos():
    vocab = _vocab("go")
    f = 1 << 12
    w = np.zeros((len(vocab), f))
    w[2, :] = 1.0
    w[EOS_ID, feature_index("prev1=go", f)] = 10.0
    lm = LogLinearLM(vocab, w)
    assert generate(lm, "start", GenerationConfig(max_tokens=5)) == "go"


def test_sampling_is_seeded():
    lm = init_generator(build_vocab(["a b c d e f g"], 16), 32, seed=4)
    cfg = GenerationConfig(max_tokens=6, mode="sample", temperature=2.0, seed=13)
    assert generate(lm, "a b", cfg) == generate(lm, "a b", cfg)


def test_generation_config_validation():
    with pytest.raises(ConfigError):
        GenerationConfig(max_tokens=-1)
    with pytest.raises(ConfigError):
        GenerationConfig(mode="sample", temperature=0.0)
    with pytest.raises(ConfigError):
        GenerationConfig(mode="beam")


def test_uniform_model_log_prob():
    vocab = _vocab("x", "y")
    lm = LogLinearLM(vocab, np.zeros((4, 8)))
    # two target tokens plus EOS, each with probability 1/4
    assert math.isclose(sequence_log_prob(lm, "p", "x y"), 3 * math.log(0.25), rel_tol=1e-12)
    loss, grad = sequence_loss_and_grad(lm, "p", "x y")
    assert math.isclose(loss, math.log(4.0), rel_tol=1e-12)
    assert grad.shape == (4, 8)


def test_unknown_target_tokens_score_as_unk():
    vocab = _vocab("x")
    f = 64
    w = np.zeros((3, f))
    w[UNK_ID, :] = 1.0
    lm = LogLinearLM(vocab, w)
    assert sequence_log_prob(lm, "p", "never-seen") == sequence_log_prob(lm, "p", "also-unknown")


def test_loss_matches_negative_log_prob():
    lm = init_generator(build_vocab(["one two three"], 8), 64, seed=2, dtype=np.float64)
    loss, _ = sequence_loss_and_grad(lm, "count one", "two three")
    assert math.isclose(loss, -sequence_log_prob(lm, "count one", "two three") / 3, rel_tol=1e-12)


def test_init_generator_shape_and_bound():
    vocab = _vocab("a", "b", "c")
    lm = init_generator(vocab, 25, seed=1)
    assert lm.weights.shape == (5, 25) and lm.weights.dtype == np.float32
    assert np.all(np.abs(lm.weights) <= 0.2 + 1e-6)
    with pytest.raises(ValueError):
        LogLinearLM(vocab, np.zeros((3, 25)))


def test_next_token_logits_zero_weights():
    lm = LogLinearLM(_vocab("x", "y"), np.zeros((4, 32)))
    assert np.array_equal(next_token_logits(lm, ["a", "b"], ["x"]), np.zeros(4))


def test_next_token_logits_one_hot_feature_selects_column():
    f = 64
    lm = init_generator(_vocab("x", "y"), f, seed=5, dtype=np.float64)
    c = feature_index("q", f)
    assert np.array_equal(next_token_logits(lm, ["q"], []), lm.weights[:, c])


def test_next_token_logits_matches_dense_product():
    f = 128
    lm = init_generator(build_vocab(["red green blue red"], 6), f, seed=9, dtype=np.float64)
    prompt, history = ["red", "green", "red", "sky"], ["blue", "green", "red"]
    dense = lm.weights @ step_features(prompt, history, f).to_dense()
    assert np.allclose(next_token_logits(lm, prompt, history), dense, rtol=1e-12, atol=1e-12)


def _bounded_mass(lm: LogLinearLM, prompt: str, max_len: int) -> float:
    # "q" is out of vocabulary, so it scores as <unk>
    total = 0.0
    for n in range(max_len + 1):
        for seq in itertools.product(("x", "q"), repeat=n):
            total += math.exp(sequence_log_prob(lm, prompt, " ".join(seq)))
    return total


def test_sequence_probabilities_sum_to_at_most_one():
    lm = LogLinearLM(_vocab("x"), np.zeros((3, 16)))
    # uniform steps: mass of lengths 0..L is 1 - (2/3)^(L+1)
    assert math.isclose(_bounded_mass(lm, "p", 2), 1 - (2 / 3) ** 3, rel_tol=1e-12)

    w = init_generator(_vocab("x"), 16, seed=3, dtype=np.float64).weights
    # |logit| <= 0.1, so every step ends with probability above 0.29
    lm = LogLinearLM(_vocab("x"), 0.1 * w)
    masses = [_bounded_mass(lm, "p q", n) for n in (2, 6, 11)]
    assert all(m <= 1.0 + 1e-12 for m in masses)
    assert masses[0] < masses[1] < masses[2]
    assert masses[2] > 0.9


def test_sequence_log_prob_ignores_prompt_order():
    lm = init_generator(build_vocab(["a b c x y"], 8), 64, seed=6)
    assert sequence_log_prob(lm, "a b c", "x y") == sequence_log_prob(lm, "c b a", "x y")
    assert sequence_log_prob(lm, "a a b", "x") == sequence_log_prob(lm, "a b a", "x")
