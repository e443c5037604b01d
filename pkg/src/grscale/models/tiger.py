"""Encoder-decoder recommender over Semantic-ID tokens.

The encoder reads the user's history flattened to ``n * (L + 1)`` SID tokens
with learned absolute positions; the decoder emits the next item's ``L + 1``
tokens after a BOS token. Blocks are pre-norm with gated-GELU feed-forward
layers and bias-free projections; the output head is not tied to the input
embedding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..trie import BOS, PAD, SidVocab
from .adapter import Adapter, AdapterConfig
from .layers import ParamInit, causal_mask, count_params, gated_gelu_ff, ln, multi_head_attention, padding_mask


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Seq2SeqConfig:
    layers: int = 2
    d_model: int = 64
    heads: int = 2
    d_kv: int = 32
    d_ff: int = 128
    dropout: float = 0.1
    vocab_size: int = 0
    max_positions: int = 80
    sid_length: int = 4

    def validate(self):
        for k, v in asdict(self).items():
            if k != "dropout" and v <= 0:
                raise ModelError(f"Seq2SeqConfig.{k} must be positive, got {v}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0, 1)")
        if self.max_positions < self.sid_length:
            raise ModelError("max_positions shorter than one item")

    @property
    def history_items(self) -> int:
        return self.max_positions // self.sid_length


def tiger_param_count(cfg: Seq2SeqConfig) -> int:
    """Analytic trainable-parameter count (N_RS)."""
    d, inner, ff, V = cfg.d_model, cfg.heads * cfg.d_kv, cfg.d_ff, cfg.vocab_size
    enc_layer = 4 * d * inner + 3 * d * ff + 2 * (2 * d)
    dec_layer = 8 * d * inner + 3 * d * ff + 3 * (2 * d)
    embeddings = V * d + cfg.max_positions * d + (cfg.sid_length + 1) * d
    return embeddings + cfg.layers * (enc_layer + dec_layer) + 2 * (2 * d) + d * V


def _init_block(init: ParamInit, name: str, cfg: Seq2SeqConfig, cross: bool):
    d = cfg.d_model
    init.layer_norm(f"{name}.ln1", d)
    init.attention(f"{name}.self", d, cfg.heads, cfg.d_kv)
    if cross:
        init.layer_norm(f"{name}.ln_x", d)
        init.attention(f"{name}.cross", d, cfg.heads, cfg.d_kv)
    init.layer_norm(f"{name}.ln2", d)
    init.normal(f"{name}.ff.wi0", (d, cfg.d_ff))
    init.normal(f"{name}.ff.wi1", (d, cfg.d_ff))
    init.normal(f"{name}.ff.wo", (cfg.d_ff, d))


class TigerModel:
    def __init__(self, cfg: Seq2SeqConfig, vocab: SidVocab, params: dict, seed: int = 0):
        self.cfg = cfg
        self.vocab = vocab
        self.params = params
        self.rng = np.random.default_rng([seed, 1])
        self.training = False
        self.adapter: Adapter | None = None
        self._item_tokens: dict[str, tuple[int, ...]] = {}
        self._token_items: dict[tuple[int, ...], str] = {}

    # -- bookkeeping --------------------------------------------------------------
    def bind_items(self, sids) -> "TigerModel":
        """Attach the item -> SID-token table used to flatten histories."""
        for item_id in sids.ids:
            toks = self.vocab.encode(sids.sid(item_id))
            if max(toks) >= self.cfg.vocab_size:
                raise ModelError(f"item {item_id!r} token {max(toks)} exceeds vocab_size {self.cfg.vocab_size}")
            self._item_tokens[item_id] = toks
            self._token_items[toks] = item_id
        return self

    def item_tokens(self, item_id: str) -> tuple[int, ...]:
        try:
            return self._item_tokens[item_id]
        except KeyError:
            raise ModelError(f"item {item_id!r} has no SID bound to the model") from None

    def items_from_tokens(self, tokens) -> list[str]:
        L1 = self.cfg.sid_length
        return [self._token_items[tuple(tokens[i:i + L1])] for i in range(0, len(tokens), L1)]

    def trainable(self) -> dict:
        out = dict(self.params)
        if self.adapter is not None:
            out.update(self.adapter.params)
        return out

    def num_params(self) -> int:
        return count_params(self.trainable())

    def context_tokens(self, history) -> tuple[int, ...]:
        items = list(history)[-self.cfg.history_items:]
        return tuple(t for it in items for t in self.item_tokens(it))

    # -- forward ----------------------------------------------------------------------
    def _embed_history(self, histories):
        L1 = self.cfg.sid_length
        items = [list(h)[-self.cfg.history_items:] for h in histories]
        T = max(len(h) for h in items) * L1
        B = len(items)
        tokens = np.full((B, T), PAD, dtype=np.int64)
        first = np.zeros((B, T), dtype=bool)
        item_ids = np.full((B, T), None, dtype=object)
        for b, hist in enumerate(items):
            flat = [t for it in hist for t in self.item_tokens(it)]
            tokens[b, :len(flat)] = flat
            first[b, 0:len(flat):L1] = True
            for j, it in enumerate(hist):
                item_ids[b, j * L1] = it
        x = ad.embedding_lookup(self.params["tok_emb"], tokens) + self.params["enc_pos"][:T]
        if self.adapter is not None:
            x = x + self.adapter.injection(item_ids, first, x.dtype)
        return x, tokens != PAD

    def encode(self, histories) -> tuple[Tensor, np.ndarray]:
        p, cfg = self.params, self.cfg
        x, valid = self._embed_history(histories)
        x = ad.dropout(x, cfg.dropout, self.rng, self.training)
        mask = padding_mask(valid, x.dtype)
        for i in range(cfg.layers):
            n = f"enc.{i}"
            h_in = ln(p, f"{n}.ln1", x)
            h = multi_head_attention(p, f"{n}.self", h_in, h_in, mask, cfg.heads, cfg.d_kv)
            x = x + ad.dropout(h, cfg.dropout, self.rng, self.training)
            h = gated_gelu_ff(p, f"{n}.ff", ln(p, f"{n}.ln2", x))
            x = x + ad.dropout(h, cfg.dropout, self.rng, self.training)
        return ln(p, "enc.ln_f", x), mask

    def decode(self, memory: Tensor, mem_mask: np.ndarray, dec_tokens: np.ndarray) -> Tensor:
        p, cfg = self.params, self.cfg
        T = dec_tokens.shape[1]
        if T > cfg.sid_length + 1:
            raise ModelError(f"decoder input length {T} exceeds {cfg.sid_length + 1}")
        x = ad.embedding_lookup(p["tok_emb"], dec_tokens) + p["dec_pos"][:T]
        x = ad.dropout(x, cfg.dropout, self.rng, self.training)
        causal = causal_mask(T, x.dtype)
        for i in range(cfg.layers):
            n = f"dec.{i}"
            h_in = ln(p, f"{n}.ln1", x)
            x = x + ad.dropout(multi_head_attention(p, f"{n}.self", h_in, h_in, causal, cfg.heads, cfg.d_kv),
                               cfg.dropout, self.rng, self.training)
            x = x + ad.dropout(multi_head_attention(p, f"{n}.cross", ln(p, f"{n}.ln_x", x), memory, mem_mask,
                                                    cfg.heads, cfg.d_kv), cfg.dropout, self.rng, self.training)
            x = x + ad.dropout(gated_gelu_ff(p, f"{n}.ff", ln(p, f"{n}.ln2", x)), cfg.dropout, self.rng, self.training)
        return ad.matmul(ln(p, "dec.ln_f", x), p["lm_head"])

    def teacher_forced(self, histories, targets):
        """Logits ``(B, L + 1, V)`` and the target token matrix."""
        tgt = np.array([self.item_tokens(t) for t in targets], dtype=np.int64)
        dec_in = np.concatenate([np.full((len(tgt), 1), BOS, dtype=np.int64), tgt[:, :-1]], axis=1)
        memory, mask = self.encode(histories)
        return self.decode(memory, mask, dec_in), tgt

    def loss(self, histories, targets) -> Tensor:
        logits, tgt = self.teacher_forced(histories, targets)
        return ad.cross_entropy(logits, tgt)

    # -- decoding interface --------------------------------------------------------------
    def scorer(self):
        return TigerScorer(self)


class TigerScorer:
    """Next-token logits over a frozen model; caches encoder outputs per context."""

    def __init__(self, model: TigerModel, cache_size: int = 4096):
        self.model = model
        self.cache_size = cache_size
        self._cache: dict = {}

    @property
    def vocab_size(self) -> int:
        return self.model.cfg.vocab_size

    def _memories(self, contexts):
        m = self.model
        todo = [c for c in dict.fromkeys(contexts) if c not in self._cache]
        if todo:
            if len(self._cache) + len(todo) > self.cache_size:
                self._cache.clear()
            memory, mask = m.encode([m.items_from_tokens(c) for c in todo])
            lengths = (mask[:, 0, 0, :] == 0).sum(axis=1)
            for i, c in enumerate(todo):
                self._cache[c] = memory.data[i, :lengths[i]]

    def next_token_logits(self, context, prefixes) -> np.ndarray:
        return self.batch_next_token_logits([tuple(context)] * len(prefixes), prefixes)

    def batch_next_token_logits(self, contexts, prefixes) -> np.ndarray:
        m = self.model
        contexts = [tuple(c) for c in contexts]
        was = m.training
        m.training = False
        try:
            with ad.no_grad():
                self._memories(contexts)
                out = np.empty((len(prefixes), m.cfg.vocab_size), dtype=np.float64)
                for n in sorted({len(pf) for pf in prefixes}):
                    rows = [i for i, pf in enumerate(prefixes) if len(pf) == n]
                    mems = [self._cache[contexts[i]] for i in rows]
                    T = max(len(x) for x in mems)
                    mem = np.zeros((len(rows), T, m.cfg.d_model), dtype=mems[0].dtype)
                    valid = np.zeros((len(rows), T), dtype=bool)
                    for j, x in enumerate(mems):
                        mem[j, :len(x)] = x
                        valid[j, :len(x)] = True
                    dec = np.array([[BOS, *prefixes[i]] for i in rows], dtype=np.int64)
                    logits = m.decode(Tensor(mem), padding_mask(valid, mem.dtype), dec)
                    out[rows] = logits.data[:, -1, :]
                return out
        finally:
            m.training = was


def build_tiger(cfg: Seq2SeqConfig, vocab: SidVocab, seed: int = 0, dtype=np.float32) -> TigerModel:
    cfg.validate()
    if cfg.vocab_size < vocab.size:
        raise ModelError(f"vocab_size {cfg.vocab_size} smaller than SID vocabulary {vocab.size}")
    if cfg.sid_length != vocab.sid_length:
        raise ModelError(f"sid_length {cfg.sid_length} != vocabulary SID length {vocab.sid_length}")
    params: dict = {}
    init = ParamInit(params, np.random.default_rng([seed, 0]), dtype=dtype)
    d = cfg.d_model
    init.normal("tok_emb", (cfg.vocab_size, d))
    init.normal("enc_pos", (cfg.max_positions, d))
    init.normal("dec_pos", (cfg.sid_length + 1, d))
    for i in range(cfg.layers):
        _init_block(init, f"enc.{i}", cfg, cross=False)
    for i in range(cfg.layers):
        _init_block(init, f"dec.{i}", cfg, cross=True)
    init.layer_norm("enc.ln_f", d)
    init.layer_norm("dec.ln_f", d)
    init.normal("lm_head", (d, cfg.vocab_size))
    return TigerModel(cfg, vocab, params, seed)


def attach_adapter(model, aux, cfg: AdapterConfig, seed: int = 0):
    """Add ``MLP(aux_i)`` to each history item's first SID-token embedding (or item embedding for SASRec)."""
    d = model.cfg.d_model
    if cfg.out_dim not in (None, d):
        raise ModelError(f"adapter out_dim {cfg.out_dim} != d_model {d}")
    if cfg.in_dim not in (None, aux.dim):
        raise ModelError(f"adapter in_dim {cfg.in_dim} != aux dim {aux.dim}")
    dtype = next(iter(model.params.values())).data.dtype
    model.adapter = Adapter.build(aux, cfg, d, np.random.default_rng([seed, 2]), dtype)
    return model
