"""Trainable MLP that injects an external per-item embedding (CF or semantic) into a recommender."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor


@dataclass(frozen=True)
class AdapterConfig:
    source: str = "semantic"  # "cf" or "semantic"
    hidden_dim: int = 64
    in_dim: int | None = None
    out_dim: int | None = None
    mode: str = "add"
    zero_init: bool = True

    def __post_init__(self):
        if self.source not in ("cf", "semantic"):
            raise ValueError(f"unknown adapter source {self.source!r}")
        if self.mode != "add":
            raise ValueError("only additive injection is supported")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")


def adapter_param_count(in_dim: int, hidden: int, out_dim: int) -> int:
    return in_dim * hidden + hidden + hidden * out_dim + out_dim


class Adapter:
    def __init__(self, aux, cfg: AdapterConfig, params: dict):
        self.aux = aux
        self.cfg = cfg
        self.params = params

    @classmethod
    def build(cls, aux, cfg: AdapterConfig, d_model: int, rng: np.random.Generator, dtype=np.float32):
        in_dim = aux.dim
        bound = 1.0 / np.sqrt(in_dim)
        params = {
            "adapter.w1": Tensor(rng.uniform(-bound, bound, (in_dim, cfg.hidden_dim)), requires_grad=True, dtype=dtype),
            "adapter.b1": Tensor(np.zeros(cfg.hidden_dim), requires_grad=True, dtype=dtype),
            "adapter.w2": Tensor(np.zeros((cfg.hidden_dim, d_model)) if cfg.zero_init
                                 else rng.normal(0, 0.02, (cfg.hidden_dim, d_model)), requires_grad=True, dtype=dtype),
            "adapter.b2": Tensor(np.zeros(d_model), requires_grad=True, dtype=dtype),
        }
        return cls(aux, cfg, params)

    def mlp(self, x: Tensor) -> Tensor:
        p = self.params
        h = ad.gelu(ad.matmul(x, p["adapter.w1"]) + p["adapter.b1"])
        return ad.matmul(h, p["adapter.w2"]) + p["adapter.b2"]

    def injection(self, item_ids: np.ndarray, where: np.ndarray, dtype) -> Tensor:
        """``(B, T, d)`` tensor holding ``MLP(aux[item])`` at ``where`` and zeros elsewhere."""
        sel = np.nonzero(where)
        rows = self.aux.rows([item_ids[b, t] for b, t in zip(*sel)])
        out = self.mlp(Tensor(rows, dtype=dtype))
        table = ad.concat([Tensor(np.zeros((1, out.shape[1]), dtype=dtype)), out], axis=0)
        index = np.zeros(where.shape, dtype=np.int64)
        index[sel] = np.arange(1, len(rows) + 1)
        return ad.embedding_lookup(table, index)
