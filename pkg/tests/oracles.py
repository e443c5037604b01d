"""Independent brute-force references used by the tests.

Nothing here imports the code under test beyond plain data containers.
"""

import itertools
import math

import numpy as np


def nearest_codes(h, levels):
    """Per-level exhaustive nearest codeword search with python-level loops."""
    r = np.asarray(h, dtype=np.float64).copy()
    codes = []
    for book in levels:
        book = np.asarray(book, dtype=np.float64)
        best, best_d = 0, math.inf
        for j in range(len(book)):
            d = float(np.sum((r - book[j]) ** 2))
            if d < best_d:
                best, best_d = j, d
        codes.append(best)
        r = r - book[best]
    return codes


def enumerate_ranking(next_logits, sequences, eos):
    """Score every valid sequence by the sum of per-step renormalized log-probs.

    ``next_logits(prefix)`` returns a logit vector. At each step the allowed set is
    the tokens that continue some sequence, plus EOS when the prefix itself is a
    sequence; the final EOS step is included.
    """
    seqs = [tuple(s) for s in sequences]
    seqset = set(seqs)

    def allowed(prefix):
        a = {s[len(prefix)] for s in seqs if len(s) > len(prefix) and s[:len(prefix)] == prefix}
        if prefix in seqset:
            a.add(eos)
        return sorted(a) if a else [eos]

    def step_logp(prefix, tok):
        a = allowed(prefix)
        if len(a) == 1:
            return 0.0
        z = np.asarray(next_logits(prefix), dtype=np.float64)[a]
        m = z.max()
        lse = m + math.log(float(np.exp(z - m).sum()))
        return float(z[a.index(tok)] - lse)

    scored = []
    for s in seqs:
        total = 0.0
        for t in range(len(s)):
            total += step_logp(s[:t], s[t])
        total += step_logp(s, eos)
        scored.append((s, total))
    scored.sort(key=lambda x: (-x[1], len(x[0]), x[0]))
    return scored


def recall_count(rankings, targets, k):
    hits = 0
    for r, t in zip(rankings, targets):
        for x in list(r)[:k]:
            if x == t:
                hits += 1
                break
    return hits / len(targets)


def adjusted_rand(a, b):
    """Adjusted Rand index from the contingency table."""
    a, b = np.asarray(a), np.asarray(b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(ua), len(ub)), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    comb = lambda n: n * (n - 1) / 2
    sum_ij = comb(table).sum()
    sum_a, sum_b = comb(table.sum(1)).sum(), comb(table.sum(0)).sum()
    expected = sum_a * sum_b / comb(len(a))
    max_idx = 0.5 * (sum_a + sum_b)
    return 1.0 if max_idx == expected else (sum_ij - expected) / (max_idx - expected)


def lloyd_partition(x, k, seeds):
    """Plain Lloyd iterations from given seed rows, until assignments stop changing."""
    c = x[list(seeds)].astype(np.float64)
    labels = None
    for _ in range(100):
        d = ((x[:, None, :] - c[None]) ** 2).sum(-1)
        new = d.argmin(1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            if np.any(labels == j):
                c[j] = x[labels == j].mean(0)
    return labels


def huber_scalar(r, s):
    return 0.5 * r * r if abs(r) <= s else s * (abs(r) - 0.5 * s)


def eq4_scalar(p, n_lora, n_llm):
    return (p["R0"] - p["A"] / (n_lora + p["gamma"] * n_llm) ** p["a"]
            - p["B"] / (n_lora + p["beta"] * n_llm) ** p["b"])


def all_sequences(alphabet, max_len):
    for n in range(1, max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


class TableModel:
    """Tiny deterministic model: one random logit vector per (context, prefix)."""

    def __init__(self, vocab_size, seed, scale=2.0):
        self.vocab_size = vocab_size
        self.seed = seed
        self.scale = scale
        self.calls = 0

    def logits(self, context, prefix):
        key = [self.seed, len(context), *context, 1000, *prefix]
        return np.random.default_rng(key).normal(size=self.vocab_size) * self.scale

    def next_token_logits(self, context, prefixes):
        self.calls += 1
        return np.stack([self.logits(tuple(context), tuple(p)) for p in prefixes])


def random_trie_sequences(rng, alphabet, max_count=64, max_len=4):
    n = int(rng.integers(1, max_count + 1))
    out = set()
    for _ in range(n):
        out.add(tuple(int(t) for t in rng.choice(alphabet, int(rng.integers(1, max_len + 1)))))
    return sorted(out)
