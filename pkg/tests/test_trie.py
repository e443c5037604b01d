import numpy as np
import pytest

from grscale.trie import BOS, EOS, NUM_SPECIALS, PAD, SequenceTrie, SidVocab, TrieError
from oracles import all_sequences


@pytest.fixture
def small():
    return SequenceTrie.build([([1, 2], "x"), ([1, 3], "y")])


def test_shape_of_two_sequences(small):
    assert small.get_allowed_next_tokens([]) == {1}
    assert small.get_allowed_next_tokens([1]) == {2, 3}
    assert small.is_valid_sequence([1, 2]) and small.is_valid_sequence([1, 3])
    assert len(small) == 2


def test_unknown_prefix_empty(small):
    assert small.get_allowed_next_tokens([9]) == frozenset()


def test_validity(small):
    assert small.is_valid_sequence([1, 2])
    assert not small.is_valid_sequence([1])
    assert not small.is_valid_sequence([])


def test_errors():
    with pytest.raises(TrieError):
        SequenceTrie.build([])
    with pytest.raises(TrieError):
        SequenceTrie.build([([], "a")])
    with pytest.raises(TrieError, match="'a'.*'b'"):
        SequenceTrie.build([([1, 2], "a"), ([1, 2], "b")])


def test_payload_and_sequences(small):
    assert small.payload([1, 3]) == "y"
    assert small.payload([1]) is None
    assert small.sequences() == [((1, 2), "x"), ((1, 3), "y")]


def test_beauty_sized_sid_trie():
    rng = np.random.default_rng(0)
    seen, seqs = set(), []
    while len(seqs) < 12101:
        s = tuple(int(v) for v in rng.integers(0, 256, 3)) + (0,)
        if s not in seen:
            seen.add(s)
            seqs.append(s)
    vocab = SidVocab((256, 256, 256), 1)
    trie = SequenceTrie.build((vocab.encode(s), j) for j, s in enumerate(seqs))
    assert len(trie) == 12101


def test_membership_matches_hash_set():
    rng = np.random.default_rng(3)
    alphabet = range(4)
    inserted = {tuple(rng.integers(0, 4, rng.integers(1, 5))) for _ in range(60)}
    trie = SequenceTrie.build((s, j) for j, s in enumerate(sorted(inserted)))
    for _ in range(1000):
        q = tuple(rng.integers(0, 4, rng.integers(0, 6)))
        assert trie.is_valid_sequence(q) == (q in inserted)
    for q in all_sequences(alphabet, 4):
        assert trie.is_valid_sequence(q) == (q in inserted)


def test_prefix_property():
    rng = np.random.default_rng(4)
    seqs = sorted({tuple(rng.integers(0, 6, rng.integers(1, 6))) for _ in range(80)})
    trie = SequenceTrie.build((s, j) for j, s in enumerate(seqs))
    for s in seqs:
        for p in range(len(s)):
            assert s[p] in trie.get_allowed_next_tokens(s[:p])


def test_vocab_offsets():
    v = SidVocab((4, 3), 2)
    assert (PAD, BOS, EOS, NUM_SPECIALS) == (0, 1, 2, 3)
    assert v.offsets == (3, 7, 10)
    assert v.size == 12 and v.sid_length == 3
    assert v.encode((3, 0, 1)) == (6, 7, 11)
    assert v.decode((6, 7, 11)) == (3, 0, 1)
    with pytest.raises(TrieError):
        v.encode((4, 0, 0))
