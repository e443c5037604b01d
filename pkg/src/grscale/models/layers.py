"""Functional transformer pieces over a flat ``name -> Tensor`` parameter dict."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

NEG_INF = -np.inf


class ParamInit:
    """Seeded parameter factory writing into a flat dict."""

    def __init__(self, params: dict, rng: np.random.Generator, std: float = 0.02, dtype=np.float32):
        self.params = params
        self.rng = rng
        self.std = std
        self.dtype = dtype

    def normal(self, name, shape, std=None):
        arr = self.rng.normal(0.0, self.std if std is None else std, size=shape).astype(self.dtype)
        self.params[name] = Tensor(arr, requires_grad=True, dtype=self.dtype)

    def zeros(self, name, shape):
        self.params[name] = Tensor(np.zeros(shape, self.dtype), requires_grad=True, dtype=self.dtype)

    def ones(self, name, shape):
        self.params[name] = Tensor(np.ones(shape, self.dtype), requires_grad=True, dtype=self.dtype)

    def layer_norm(self, name, d):
        self.ones(f"{name}.g", (d,))
        self.zeros(f"{name}.b", (d,))

    def attention(self, name, d_model, heads, d_kv, bias=False):
        inner = heads * d_kv
        for p in "qkv":
            self.normal(f"{name}.{p}", (d_model, inner))
        self.normal(f"{name}.o", (inner, d_model))
        if bias:
            for p in "qkv":
                self.zeros(f"{name}.{p}_b", (inner,))
            self.zeros(f"{name}.o_b", (d_model,))


def ln(p: dict, name: str, x: Tensor) -> Tensor:
    return ad.layer_norm(x, p[f"{name}.g"], p[f"{name}.b"])


def _proj(p, name, x, key):
    y = ad.matmul(x, p[f"{name}.{key}"])
    b = p.get(f"{name}.{key}_b")
    return y + b if b is not None else y


def multi_head_attention(p: dict, name: str, xq: Tensor, xkv: Tensor, mask, heads: int, d_kv: int) -> Tensor:
    """Attention whose inner width ``heads * d_kv`` may differ from ``d_model``."""
    B, Tq, _ = xq.shape
    Tk = xkv.shape[1]

    def split(t, T):
        return ad.transpose(ad.reshape(t, (B, T, heads, d_kv)), (0, 2, 1, 3))

    q = split(_proj(p, name, xq, "q"), Tq)
    k = split(_proj(p, name, xkv, "k"), Tk)
    v = split(_proj(p, name, xkv, "v"), Tk)
    o = ad.scaled_dot_attention(q, k, v, mask)
    o = ad.reshape(ad.transpose(o, (0, 2, 1, 3)), (B, Tq, heads * d_kv))
    return _proj(p, name, o, "o")


def gated_gelu_ff(p: dict, name: str, x: Tensor) -> Tensor:
    h = ad.gelu(ad.matmul(x, p[f"{name}.wi0"])) * ad.matmul(x, p[f"{name}.wi1"])
    return ad.matmul(h, p[f"{name}.wo"])


def causal_mask(T: int, dtype=np.float32) -> np.ndarray:
    return np.triu(np.full((T, T), NEG_INF, dtype=dtype), k=1)


def padding_mask(valid: np.ndarray, dtype=np.float32) -> np.ndarray:
    """``(B, T)`` boolean -> additive key mask ``(B, 1, 1, T)``."""
    return np.where(valid, 0.0, NEG_INF).astype(dtype)[:, None, None, :]


def count_params(params: dict, exclude=()) -> int:
    return int(sum(t.data.size for k, t in params.items() if not any(k.startswith(e) for e in exclude)))
