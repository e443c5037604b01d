"""Prefix tree over valid token sequences, and the flat SID token vocabulary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

PAD, BOS, EOS = 0, 1, 2
NUM_SPECIALS = 3


class TrieError(ValueError):
    pass


class _Node:
    __slots__ = ("children", "terminal", "payload")

    def __init__(self):
        self.children: dict[int, _Node] = {}
        self.terminal = False
        self.payload = None


class SequenceTrie:
    """Immutable after :meth:`build`; safe for concurrent reads."""

    def __init__(self):
        self._root = _Node()
        self._count = 0

    @classmethod
    def build(cls, sequences: Iterable[tuple[Sequence[int], Hashable]]) -> "SequenceTrie":
        trie = cls()
        seen_payloads = set()
        for tokens, payload in sequences:
            tokens = tuple(int(t) for t in tokens)
            if not tokens:
                raise TrieError("empty token sequence")
            if payload in seen_payloads:
                raise TrieError(f"duplicate payload {payload!r}")
            seen_payloads.add(payload)
            node = trie._root
            for tok in tokens:
                node = node.children.setdefault(tok, _Node())
            if node.terminal:
                raise TrieError(f"sequence {list(tokens)} inserted twice (payloads {node.payload!r} and {payload!r})")
            node.terminal = True
            node.payload = payload
            trie._count += 1
        if trie._count == 0:
            raise TrieError("cannot build a trie from no sequences")
        return trie

    def __len__(self) -> int:
        return self._count

    def _walk(self, prefix: Sequence[int]):
        node = self._root
        for tok in prefix:
            node = node.children.get(int(tok))
            if node is None:
                return None
        return node

    def get_allowed_next_tokens(self, prefix: Sequence[int]) -> frozenset[int]:
        node = self._walk(prefix)
        return frozenset(node.children) if node is not None else frozenset()

    def is_valid_sequence(self, tokens: Sequence[int]) -> bool:
        node = self._walk(tokens)
        return node is not None and node.terminal

    def payload(self, tokens: Sequence[int]):
        node = self._walk(tokens)
        return node.payload if node is not None and node.terminal else None

    def sequences(self):
        """All ``(tokens, payload)`` pairs in lexicographic token order."""
        stack = [((), self._root)]
        out = []
        while stack:
            prefix, node = stack.pop()
            if node.terminal:
                out.append((prefix, node.payload))
            for tok in sorted(node.children, reverse=True):
                stack.append((prefix + (tok,), node.children[tok]))
        return out


@dataclass(frozen=True)
class SidVocab:
    """Flat token ids: specials first, then one block per level, then the disambiguation digits.

    Level ``l`` code ``j`` maps to ``NUM_SPECIALS + sum(W[:l]) + j``.
    """

    level_sizes: tuple[int, ...]
    disambig_size: int

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], NUM_SPECIALS
        for w in (*self.level_sizes, self.disambig_size):
            out.append(acc)
            acc += w
        return tuple(out)

    @property
    def size(self) -> int:
        return NUM_SPECIALS + sum(self.level_sizes) + self.disambig_size

    @property
    def sid_length(self) -> int:
        return len(self.level_sizes) + 1

    def encode(self, sid: Sequence[int]) -> tuple[int, ...]:
        if len(sid) != self.sid_length:
            raise TrieError(f"SID {tuple(sid)} has length {len(sid)}, expected {self.sid_length}")
        out = []
        for pos, (code, off) in enumerate(zip(sid, self.offsets)):
            limit = (*self.level_sizes, self.disambig_size)[pos]
            if not 0 <= code < limit:
                raise TrieError(f"code {code} out of range at position {pos}")
            out.append(off + int(code))
        return tuple(out)

    def decode(self, tokens: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(t) - off for t, off in zip(tokens, self.offsets))

    @classmethod
    def for_assignment(cls, sa, level_sizes=None) -> "SidVocab":
        """Vocabulary for ``sa``; pass the codebook sizes to size blocks by ``W`` instead of observed codes."""
        if level_sizes is None:
            level_sizes = tuple(int(sa.codes[:, l].max()) + 1 for l in range(sa.num_levels))
        return cls(tuple(int(w) for w in level_sizes), sa.max_disambig)


def build_item_trie(sa, vocab: SidVocab) -> SequenceTrie:
    """Trie of every item's flat SID tokens, with the item_id as payload."""
    return SequenceTrie.build((vocab.encode(sa.sid(i)), i) for i in sa.ids)
