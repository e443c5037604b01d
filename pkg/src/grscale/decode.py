"""Trie-constrained beam search over any model exposing next-token logits.

A model (or scorer) provides ``next_token_logits(context, prefixes) -> (n, V)``
where ``prefixes`` are the generated suffixes so far. Scorers that also expose
``batch_next_token_logits(contexts, prefixes)`` let :func:`batch_beam_search`
advance many users in lock-step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .trie import EOS, SequenceTrie


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int
    max_new_tokens: int
    trie: SequenceTrie
    length_normalize: bool = False

    def __post_init__(self):
        if self.beam_width < 1 or self.max_new_tokens < 1:
            raise ValueError("beam_width and max_new_tokens must be >= 1")


@dataclass(frozen=True)
class BeamState:
    tokens: tuple[int, ...]
    score: float
    finished: bool = False


def _rank_key(b: BeamState, length_normalize: bool = False):
    s = b.score / max(len(b.tokens), 1) if length_normalize else b.score
    return (-s, len(b.tokens), b.tokens)


def allowed_tokens(trie: SequenceTrie, suffix) -> list[int]:
    """Trie children of ``suffix``, plus EOS if it is a complete sequence; ``[EOS]`` if nothing else."""
    allowed = set(trie.get_allowed_next_tokens(suffix))
    if trie.is_valid_sequence(suffix):
        allowed.add(EOS)
    return sorted(allowed) if allowed else [EOS]


def masked_log_softmax(logits: np.ndarray, allowed) -> np.ndarray:
    """Log-probabilities over ``allowed`` after masking everything else to -inf."""
    z = np.asarray(logits, dtype=np.float64)[list(allowed)]
    m = z.max()
    return z - (m + np.log(np.exp(z - m).sum()))


def _step(beams_per_ctx, logits_for, trie, k, length_normalize):
    """Advance each context's beams one token. ``logits_for(rows)`` maps [(ctx, suffix)] -> (n, V)."""
    need, plans = [], []
    for c, beams in enumerate(beams_per_ctx):
        for b in beams:
            if b.finished:
                continue
            allowed = allowed_tokens(trie, b.tokens)
            plans.append((c, b, allowed))
            if len(allowed) > 1:
                need.append((c, b.tokens))
    rows = {}
    if need:
        logits = np.asarray(logits_for(need), dtype=np.float64)
        if not np.all(np.isfinite(logits)):
            raise DecodeError("model produced non-finite logits")
        rows = {key: logits[i] for i, key in enumerate(need)}
    cand = [[b for b in beams if b.finished] for beams in beams_per_ctx]
    for c, b, allowed in plans:
        if len(allowed) == 1:
            # single-support softmax: probability one, log-prob exactly zero
            logp = np.zeros(1)
        else:
            logp = masked_log_softmax(rows[(c, b.tokens)], allowed)
        for tok, lp in zip(allowed, logp):
            cand[c].append(BeamState(b.tokens + (tok,), b.score + float(lp), tok == EOS))
    return [sorted(cs, key=lambda b: _rank_key(b, length_normalize))[:k] for cs in cand]


def _finish(beams, length_normalize):
    out = []
    for b in beams:
        toks = b.tokens[:-1] if b.finished else b.tokens
        out.append(BeamState(toks, b.score, b.finished))
    out.sort(key=lambda b: _rank_key(b, length_normalize))
    return [(b.tokens, b.score) for b in out]


def constrained_beam_search(model, context, cfg: DecodeConfig):
    """Ranked ``[(tokens, score)]`` of at most ``beam_width`` sequences, EOS stripped."""
    if len(cfg.trie) == 0:
        raise DecodeError("empty trie")
    context = tuple(context)
    beams = [[BeamState((), 0.0)]]

    def logits_for(need):
        return model.next_token_logits(context, [s for _, s in need])

    for _ in range(cfg.max_new_tokens):
        if all(b.finished for b in beams[0]):
            break
        beams = _step(beams, logits_for, cfg.trie, cfg.beam_width, cfg.length_normalize)
    return _finish(beams[0], cfg.length_normalize)


def batch_beam_search(model, contexts, cfg: DecodeConfig):
    """:func:`constrained_beam_search` for many contexts, sharing model calls per step."""
    contexts = [tuple(c) for c in contexts]
    beams = [[BeamState((), 0.0)] for _ in contexts]
    batched = getattr(model, "batch_next_token_logits", None)

    def logits_for(need):
        if batched is not None:
            return batched([contexts[c] for c, _ in need], [s for _, s in need])
        return np.stack([model.next_token_logits(contexts[c], [s])[0] for c, s in need])

    for _ in range(cfg.max_new_tokens):
        if all(b.finished for bs in beams for b in bs):
            break
        beams = _step(beams, logits_for, cfg.trie, cfg.beam_width, cfg.length_normalize)
    return [_finish(bs, cfg.length_normalize) for bs in beams]


def _payloads(ranked, trie):
    items, scores = [], []
    for toks, score in ranked:
        item = trie.payload(toks)
        if item is None:
            raise DecodeError(f"decoded sequence {list(toks)} has no item payload")
        items.append(item)
        scores.append(score)
    return items, scores


def next_item_candidates(model, history, k: int, trie: SequenceTrie, return_scores: bool = False):
    """Top-``k`` distinct item_ids for one user history via constrained decoding."""
    return batch_next_items(model, [history], k, trie, return_scores=return_scores)[0]


def batch_next_items(model, histories, k: int, trie: SequenceTrie, batch_size: int = 256,
                     return_scores: bool = False):
    """Ranked item lists for many users. ``model`` is a :class:`TigerModel`."""
    cfg = DecodeConfig(k, model.cfg.sid_length + 1, trie)
    scorer = model.scorer()
    out = []
    for s in range(0, len(histories), batch_size):
        chunk = histories[s:s + batch_size]
        ranked = batch_beam_search(scorer, [model.context_tokens(h) for h in chunk], cfg)
        for r in ranked:
            items, scores = _payloads(r, trie)
            out.append((items, scores) if return_scores else items)
    return out


def write_decodes(path, user_ids, results) -> None:
    """Batch decode JSONL: one ``{"user_id", "ranked_items", "scores"}`` per user."""
    with open(path, "w", encoding="utf-8") as f:
        for uid, (items, scores) in zip(user_ids, results):
            f.write(json.dumps({"user_id": uid, "ranked_items": list(items),
                                "scores": [float(x) for x in scores]}) + "\n")


def read_decodes(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
