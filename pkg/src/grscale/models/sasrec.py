"""SASRec: causal self-attention over raw item-id embeddings.

Scores for the next item are ``hidden @ item_table.T``; the learned item
table doubles as the CF embedding source for adapters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..embed import EmbeddingMatrix
from .adapter import Adapter
from .layers import ParamInit, causal_mask, count_params, ln, multi_head_attention, padding_mask
from .tiger import ModelError


@dataclass(frozen=True)
class SasrecConfig:
    layers: int = 2
    d_model: int = 64
    heads: int = 2
    max_positions: int = 20
    item_count: int = 0
    ff_mult: int = 4
    dropout: float = 0.1

    def validate(self):
        if min(self.layers, self.d_model, self.heads, self.max_positions, self.item_count, self.ff_mult) <= 0:
            raise ModelError("SasrecConfig fields must be positive")
        if self.d_model % self.heads:
            raise ModelError("d_model must be divisible by heads")


def sasrec_param_count(cfg: SasrecConfig) -> int:
    """Non-embedding trainable parameters (N_SA): blocks plus final norm."""
    d, f = cfg.d_model, cfg.ff_mult * cfg.d_model
    per_layer = (4 * d * d + 4 * d) + (d * f + f + f * d + d) + 2 * (2 * d)
    return cfg.layers * per_layer + 2 * d


def sasrec_embedding_count(cfg: SasrecConfig) -> int:
    return (cfg.item_count + 1) * cfg.d_model + cfg.max_positions * cfg.d_model


class SasrecModel:
    def __init__(self, cfg: SasrecConfig, item_ids, params: dict, seed: int = 0):
        self.cfg = cfg
        self.item_ids = tuple(item_ids)
        self.index = {it: i + 1 for i, it in enumerate(self.item_ids)}  # 0 is padding
        self.params = params
        self.rng = np.random.default_rng([seed, 1])
        self.training = False
        self.adapter: Adapter | None = None

    def trainable(self) -> dict:
        out = dict(self.params)
        if self.adapter is not None:
            out.update(self.adapter.params)
        return out

    def num_params(self) -> int:
        return count_params(self.trainable())

    def num_nonembedding_params(self) -> int:
        return count_params(self.params, exclude=("item_emb", "pos_emb"))

    def _ids(self, histories):
        hs = [list(h)[-self.cfg.max_positions:] for h in histories]
        T = max(len(h) for h in hs)
        ids = np.zeros((len(hs), T), dtype=np.int64)
        names = np.full((len(hs), T), None, dtype=object)
        for b, h in enumerate(hs):
            try:
                ids[b, :len(h)] = [self.index[i] for i in h]
            except KeyError as exc:
                raise ModelError(f"unknown item {exc.args[0]!r}") from None
            names[b, :len(h)] = h
        return ids, names, np.array([len(h) for h in hs])

    def hidden(self, histories) -> tuple[Tensor, np.ndarray]:
        """Per-position hidden states ``(B, T, d)`` and history lengths."""
        p, cfg = self.params, self.cfg
        ids, names, lengths = self._ids(histories)
        T = ids.shape[1]
        x = ad.embedding_lookup(p["item_emb"], ids) + p["pos_emb"][:T]
        if self.adapter is not None:
            x = x + self.adapter.injection(names, ids > 0, x.dtype)
        x = ad.dropout(x, cfg.dropout, self.rng, self.training)
        mask = causal_mask(T, x.dtype)[None, None] + padding_mask(ids > 0, x.dtype)
        heads, d_kv = cfg.heads, cfg.d_model // cfg.heads
        for i in range(cfg.layers):
            n = f"blk.{i}"
            h_in = ln(p, f"{n}.ln1", x)
            x = x + ad.dropout(multi_head_attention(p, f"{n}.attn", h_in, h_in, mask, heads, d_kv),
                               cfg.dropout, self.rng, self.training)
            h = ad.gelu(ad.matmul(ln(p, f"{n}.ln2", x), p[f"{n}.ff.w1"]) + p[f"{n}.ff.b1"])
            x = x + ad.dropout(ad.matmul(h, p[f"{n}.ff.w2"]) + p[f"{n}.ff.b2"], cfg.dropout, self.rng, self.training)
        return ln(p, "ln_f", x), lengths

    def scores(self, histories) -> Tensor:
        """Next-item logits ``(B, item_count)`` read at each history's last position."""
        h, lengths = self.hidden(histories)
        last = h[np.arange(len(lengths)), lengths - 1]
        return ad.matmul(last, ad.transpose(self.params["item_emb"][1:], (1, 0)))

    def loss(self, histories, targets) -> Tensor:
        tgt = np.array([self.index[t] - 1 for t in targets], dtype=np.int64)
        return ad.cross_entropy(self.scores(histories), tgt)

    def rank(self, histories, k: int) -> list[list[str]]:
        was, self.training = self.training, False
        try:
            with ad.no_grad():
                s = self.scores(histories).data
        finally:
            self.training = was
        order = np.argsort(-s, axis=1, kind="stable")[:, :k]
        return [[self.item_ids[j] for j in row] for row in order]

    def item_embeddings(self) -> EmbeddingMatrix:
        """The learned item table as CF embeddings."""
        return EmbeddingMatrix(self.params["item_emb"].data[1:].astype(np.float32), self.item_ids)


def build_sasrec(cfg: SasrecConfig, item_ids, seed: int = 0, dtype=np.float32) -> SasrecModel:
    cfg.validate()
    item_ids = tuple(item_ids)
    if len(item_ids) != cfg.item_count:
        raise ModelError(f"item_count {cfg.item_count} != {len(item_ids)} items")
    params: dict = {}
    init = ParamInit(params, np.random.default_rng([seed, 0]), dtype=dtype)
    d, f = cfg.d_model, cfg.ff_mult * cfg.d_model
    init.normal("item_emb", (cfg.item_count + 1, d))
    params["item_emb"].data[0] = 0.0
    init.normal("pos_emb", (cfg.max_positions, d))
    for i in range(cfg.layers):
        n = f"blk.{i}"
        init.layer_norm(f"{n}.ln1", d)
        init.attention(f"{n}.attn", d, cfg.heads, d // cfg.heads, bias=True)
        init.layer_norm(f"{n}.ln2", d)
        init.normal(f"{n}.ff.w1", (d, f))
        init.zeros(f"{n}.ff.b1", (f,))
        init.normal(f"{n}.ff.w2", (f, d))
        init.zeros(f"{n}.ff.b2", (d,))
    init.layer_norm("ln_f", d)
    return SasrecModel(cfg, item_ids, params, seed)
