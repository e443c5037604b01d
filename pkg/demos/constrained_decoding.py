"""Constrained beam search only ever emits catalog sequences.

A toy model with random logits decodes against a small trie; with a beam as
wide as the catalog the ranking matches scoring every sequence by hand.
"""

import math

import numpy as np

from grscale.decode import DecodeConfig, allowed_tokens, constrained_beam_search, masked_log_softmax
from grscale.trie import EOS, SequenceTrie


class RandomLogits:
    def next_token_logits(self, context, prefixes):
        return np.stack([np.random.default_rng([7, *p]).normal(size=10) * 2 for p in prefixes])


catalog = [(3, 4, 5), (3, 4, 6), (3, 7), (8,), (8, 9)]
trie = SequenceTrie.build((s, f"item{j}") for j, s in enumerate(catalog))
model = RandomLogits()

for k in (1, 2, len(catalog)):
    out = constrained_beam_search(model, (), DecodeConfig(k, 4, trie))
    print(f"k={k}:", [(trie.payload(s), round(v, 4)) for s, v in out])


def by_hand(seq):
    total = 0.0
    for t in range(len(seq) + 1):
        nxt = seq[t] if t < len(seq) else EOS
        allowed = allowed_tokens(trie, seq[:t])
        lp = masked_log_softmax(model.next_token_logits((), [seq[:t]])[0], allowed)
        total += lp[allowed.index(nxt)]
    return total


ranked = sorted(catalog, key=lambda s: (-by_hand(s), len(s), s))
beam = [s for s, _ in constrained_beam_search(model, (), DecodeConfig(len(catalog), 4, trie))]
print("exhaustive ranking equals full-width beam:", ranked == beam)
print("probability mass over the catalog:", round(math.fsum(math.exp(by_hand(s)) for s in catalog), 12))
