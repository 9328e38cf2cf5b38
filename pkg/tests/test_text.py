from hypothesis import given, strategies as st

from rag_engine.text import SparseFeatureVector, bow_features, feature_index, hash64, tokenize

_TEXT = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=0x24F), max_size=60)


def test_tokenize_lowercases_and_strips_edge_punctuation():
    assert tokenize("Hello, World!") == ["hello", "world"]
    assert tokenize("  (Paris).  ") == ["paris"]
    assert tokenize("don't stop") == ["don't", "stop"]


def test_tokenize_drops_pure_punctuation_and_blank_input():
    assert tokenize("") == []
    assert tokenize(" \t\n ") == []
    assert tokenize("-- ... !!") == []


def test_tokenize_splits_only_on_unicode_white_space():
    assert tokenize("a\xa0b\u3000c\u2028d") == ["a", "b", "c", "d"]
    # information separators are not White_Space
    assert tokenize("a\x1fb") == ["a\x1fb"]
    assert tokenize("a\x1cb c") == ["a\x1cb", "c"]


def test_tokenize_underscore_counts_as_punctuation():
    assert tokenize("__init__") == ["init"]


@given(_TEXT)
def test_tokenize_is_idempotent(s):
    once = tokenize(s)
    assert tokenize(" ".join(once)) == once


def test_hash64_known_vectors():
    assert hash64(b"") == 0xCBF29CE484222325
    assert hash64(b"a") == 0xAF63DC4C8601EC8C
    assert hash64(b"foobar") == 0x85944171F73967E8


def test_feature_index_in_range():
    for token in ["a", "paris", "prev1=<eos>", "ü"]:
        assert 0 <= feature_index(token, 17) < 17


@given(st.lists(st.sampled_from(["red", "blue", "green", "x", "y"]), max_size=30), st.integers(1, 64))
def test_bow_counts_sum_to_token_count(tokens, dim):
    phi = bow_features(tokens, dim)
    assert phi.total() == float(len(tokens))
    assert all(0 <= i < dim for i in phi.entries)


def test_bow_repeated_token_accumulates():
    phi = bow_features(["a", "a", "b"], 1024)
    assert phi.entries[feature_index("a", 1024)] >= 2.0


def test_sparse_vector_plus_and_dense():
    phi = SparseFeatureVector(4, {1: 2.0})
    out = phi.plus([1, 3])
    assert out.entries == {1: 3.0, 3: 1.0}
    assert list(out.to_dense()) == [0.0, 3.0, 0.0, 1.0]
    idx, counts = out.arrays()
    assert list(idx) == [1, 3]
    assert list(counts) == [3.0, 1.0]
