import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discoadapt.autodiff import Tape, no_tape, ops
from discoadapt.data import Batch
from discoadapt.encoder import OOV, PAD, EmbeddingTable, Encoder, EncoderConfig, reverse_index, token_batch

SMALL = EncoderConfig(hidden_size=5, z_dim=7, attn_dim=6, max_len=12)


def make_table(rng, vocab=10, dim=6, trainable=False):
    return EmbeddingTable.from_rows([f"w{i}" for i in range(vocab)], rng.normal(size=(vocab, dim)), rng,
                                    trainable=trainable)


def test_table_layout_and_lookup(rng):
    table = make_table(rng)
    assert len(table) == 12 and table.dim == 6
    assert not table.weight.data[PAD].any()
    assert table.lookup(["w0", "nope", "w9"]) == [2, OOV, 11]


def test_table_rejects_nonzero_padding_row():
    with pytest.raises(ValueError, match="padding"):
        EmbeddingTable(["a"], np.ones((3, 2)))


def test_default_output_is_200_dimensional(rng):
    enc = Encoder(make_table(rng, dim=300 // 10), EncoderConfig(), rng)
    batch = token_batch(enc.embeddings, [(["w1", "w2"], ["w3"])])
    with no_tape():
        assert enc(batch).shape == (1, 200)


def test_same_seed_gives_identical_parameters():
    t = make_table(np.random.default_rng(0))
    a = Encoder(t, SMALL, np.random.default_rng(5))
    b = Encoder(t, SMALL, np.random.default_rng(5))
    assert a.digest() == b.digest()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 2**31 - 1))
def test_padding_does_not_change_representation(n, extra, seed):
    rng = np.random.default_rng(seed)
    enc = Encoder(make_table(rng), SMALL, rng)
    ids = rng.integers(1, 12, size=(1, n))
    padded = np.concatenate([ids, np.zeros((1, extra), dtype=ids.dtype)], axis=1)
    lens = np.array([n])
    with no_tape():
        a = enc.encode(ids, lens).data
        b = enc.encode(padded, lens).data
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 7), min_size=1, max_size=5), st.integers(0, 2**31 - 1))
def test_attention_is_a_distribution_over_real_tokens(lens, seed):
    rng = np.random.default_rng(seed)
    enc = Encoder(make_table(rng), SMALL, rng)
    lens = np.array(lens)
    T = lens.max()
    ids = np.where(np.arange(T)[None] < lens[:, None], rng.integers(1, 12, size=(len(lens), T)), 0)
    mask = np.arange(T)[None] < lens[:, None]
    with no_tape():
        _, alpha = enc.attend(enc.hidden_states(ids, lens), mask)
    np.testing.assert_allclose(alpha.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(alpha.data[~mask] == 0.0)
    assert np.all(alpha.data >= 0)


def test_rows_are_encoded_independently(rng):
    enc = Encoder(make_table(rng), SMALL, rng)
    ids = rng.integers(1, 12, size=(4, 5))
    lens = np.array([5, 3, 1, 4])
    with no_tape():
        full = enc.encode(ids, lens).data
        single = np.concatenate([enc.encode(ids[i:i + 1], lens[i:i + 1]).data for i in range(4)])
    np.testing.assert_allclose(full, single, atol=1e-12)


def test_pair_representation_concatenates_both_arguments(rng):
    enc = Encoder(make_table(rng), SMALL, rng)
    b = token_batch(enc.embeddings, [(["w1", "w2", "w3"], ["w4"]), (["w5"], ["w6", "w7"])])
    with no_tape():
        pair = enc(b).data
        a1 = enc.encode(b.ids1, b.len1).data
        a2 = enc.encode(b.ids2, b.len2).data
    np.testing.assert_allclose(pair, np.concatenate([a1, a2], axis=1), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=6))
def test_reverse_index_is_an_involution_that_fixes_padding(lens):
    lens = np.array(lens)
    T = int(lens.max()) + 2
    r = reverse_index(lens, T)
    np.testing.assert_array_equal(np.take_along_axis(r, r, axis=1), np.tile(np.arange(T), (len(lens), 1)))
    for i, n in enumerate(lens):
        assert list(r[i, :n]) == list(range(n - 1, -1, -1))
        assert list(r[i, n:]) == list(range(n, T))


def test_backward_direction_reads_sequence_reversed(rng):
    # the backward state at position 0 has seen the whole argument
    enc = Encoder(make_table(rng), SMALL, rng)
    ids = np.array([[2, 3, 4]])
    with no_tape():
        h1 = enc.hidden_states(ids, np.array([3])).data
        h2 = enc.hidden_states(np.array([[2, 3, 5]]), np.array([3])).data
    H = SMALL.hidden_size
    np.testing.assert_array_equal(h1[0, :2, :H], h2[0, :2, :H])
    assert not np.allclose(h1[0, 0, H:], h2[0, 0, H:])


def test_empty_argument_rejected(rng):
    table = make_table(rng)
    with pytest.raises(ValueError, match="empty"):
        token_batch(table, [([], ["w1"])])
    enc = Encoder(table, SMALL, rng)
    with pytest.raises(ValueError):
        enc.encode(np.zeros((1, 3), dtype=np.int64), np.array([0]))


def test_long_arguments_truncated(rng):
    enc = Encoder(make_table(rng), SMALL, rng)
    ids = rng.integers(1, 12, size=(1, 30))
    with no_tape():
        a = enc.encode(ids, np.array([30])).data
        b = enc.encode(ids[:, :12], np.array([12])).data
    np.testing.assert_array_equal(a, b)


def test_copy_shares_frozen_table_and_is_independent(rng):
    enc = Encoder(make_table(rng), SMALL, rng)
    other = enc.copy()
    assert other.embeddings is enc.embeddings
    assert other.digest() == enc.digest()
    next(iter(other.params().values())).data += 1.0
    assert other.digest() != enc.digest()


def test_trainable_embeddings_keep_padding_row_fixed(rng):
    enc = Encoder(make_table(rng, trainable=True), SMALL, rng)
    assert "embeddings" in enc.params()
    b = Batch(np.array([[2, 3, 0]]), np.array([2]), np.array([[4, 0, 0]]), np.array([1]), np.array([0]))
    params = enc.params()
    with Tape() as tape:
        loss = ops.sum(enc(b))
    grads = dict(zip(params, tape.gradient(loss, list(params.values()))))
    grads = enc.fix_grads(grads)
    assert not grads["embeddings"][PAD].any()
