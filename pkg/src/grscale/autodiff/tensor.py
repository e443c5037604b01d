"""Reverse-mode tensor engine on top of numpy.

Every op returns a new :class:`Tensor`; when any input requires a gradient the
result records its parents and a closure that pushes the upstream gradient
back into them. :func:`backward` walks the recorded graph in reverse
topological order.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when an op receives inputs of incompatible shapes."""


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors (``"float32"``/``"float64"``)."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self.name = name
        self._parents: tuple = ()
        self._backward: Callable | None = None

    # -- basic protocol -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    # -- operators ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        arr = np.asarray(x)
        dtype = arr.dtype if arr.dtype.kind == "f" else _DEFAULT_DTYPE
    return Tensor(x, dtype=dtype)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        t.grad = g.copy() if g.base is not None or g is t.data else g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), "div", bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), "neg", lambda g: _accum(a, -g))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), "exp", lambda g: _accum(a, g * out))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), "log", lambda g: _accum(a, g / a.data))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), "sigmoid", lambda g: _accum(a, g * out * (1.0 - out)))


def power(base, exponent) -> Tensor:
    """``base ** exponent``; a tensor exponent requires a positive base."""
    base = as_tensor(base)
    if not isinstance(exponent, Tensor):
        p = float(exponent)
        out = base.data**p
        return _make(out, (base,), "pow", lambda g: _accum(base, g * p * base.data ** (p - 1)))
    exponent = as_tensor(exponent)
    _check_broadcast("power", base, exponent)
    out = base.data**exponent.data

    def bw(g):
        if base.requires_grad:
            _accum(base, _unbroadcast(g * exponent.data * base.data ** (exponent.data - 1), base.shape))
        if exponent.requires_grad:
            _accum(exponent, _unbroadcast(g * out * np.log(base.data), exponent.shape))

    return _make(out, (base, exponent), "pow", bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), "relu", lambda g: _accum(a, g * mask))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        _accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner))

    return _make(out, (a,), "gelu", bw)


def huber(a, delta: float) -> Tensor:
    """Elementwise Huber penalty: quadratic inside ``|x| <= delta``, linear outside."""
    a = as_tensor(a)
    x = a.data
    ax = np.abs(x)
    out = np.where(ax <= delta, 0.5 * x * x, delta * (ax - 0.5 * delta))
    return _make(out, (a,), "huber", lambda g: _accum(a, g * np.clip(x, -delta, delta)))


def stop_gradient(a) -> Tensor:
    return as_tensor(a).detach()


def dropout(a, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    a = as_tensor(a)
    if not training or p <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return _make(a.data * keep, (a,), "dropout", lambda g: _accum(a, g * keep))


# -- reductions and shape ------------------------------------------------------------


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(np.asarray(out), (a,), "sum", bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.asarray(out).size, 1) if axis is not None else a.data.size

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / count, a.shape))

    return _make(np.asarray(out), (a,), "mean", bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from None
    return _make(out, (a,), "reshape", lambda g: _accum(a, g.reshape(a.shape)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), "transpose", lambda g: _accum(a, np.transpose(g, inv)))


def slice_(a, index) -> Tensor:
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accum(a, full)

    return _make(np.array(out), (a,), "slice", bw)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        for t, part in zip(ts, np.split(g, bounds, axis=axis)):
            _accum(t, part)

    return _make(out, ts, "concat", bw)


# -- linear algebra ------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                ga = a.data.reshape(-1, a.shape[-1])
                _accum(b, ga.T @ g.reshape(-1, g.shape[-1]))
            else:
                _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(out, (a, b), "matmul", bw)


def embedding_lookup(table, indices) -> Tensor:
    table = as_tensor(table)
    idx = np.asarray(indices.data if isinstance(indices, Tensor) else indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: index out of range for table {table.shape}")
    out = table.data[idx]

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        _accum(table, full)

    return _make(out, (table,), "embedding_lookup", bw)


# -- normalisation and probabilities -------------------------------------------------


def _stable_shift(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return x - m


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    e = np.exp(_stable_shift(a.data, axis))
    s = e.sum(axis=axis, keepdims=True)
    out = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def bw(g):
        _accum(a, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), "softmax", bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = _stable_shift(a.data, axis)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        p = np.exp(out)
        _accum(a, g - p * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), "log_softmax", bw)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            n = x.shape[-1]
            dx = inv / n * (n * gx - gx.sum(axis=-1, keepdims=True) - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
            _accum(x, dx)

    return _make(out, (x, gain, bias), "layer_norm", bw)


def cross_entropy(logits, targets, ignore_index: int | None = None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``logits`` (last axis = classes)."""
    logits = as_tensor(logits)
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.int64)
    if logits.shape[:-1] != t.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} do not match targets {t.shape}")
    flat = logits.data.reshape(-1, logits.shape[-1])
    tf = t.reshape(-1)
    valid = np.ones_like(tf, dtype=bool) if ignore_index is None else tf != ignore_index
    count = max(int(valid.sum()), 1)
    z = _stable_shift(flat, -1)
    lse = np.log(np.exp(z).sum(axis=-1))
    safe_t = np.where(valid, tf, 0)
    nll = lse - z[np.arange(len(tf)), safe_t]
    loss = np.asarray((nll * valid).sum() / count, dtype=logits.dtype)

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(len(tf)), safe_t] -= 1.0
        p *= (valid / count)[:, None]
        _accum(logits, (p * g).reshape(logits.shape))

    return _make(loss, (logits,), "cross_entropy", bw)


def scaled_dot_attention(q, k, v, mask=None) -> Tensor:
    """softmax(q k^T / sqrt(d) + mask) v over the last two axes.

    ``mask`` is additive (0 or -inf) and broadcastable to ``(..., Tq, Tk)``.
    A query row with every key masked yields zeros.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2] or q.shape[:-2] != k.shape[:-2]:
        raise ShapeError(f"scaled_dot_attention: q {q.shape}, k {k.shape}, v {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = np.matmul(q.data, np.swapaxes(k.data, -1, -2)) * scale
    if mask is not None:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
        try:
            s = s + m.astype(s.dtype)
        except ValueError:
            raise ShapeError(f"scaled_dot_attention: mask {m.shape} vs scores {s.shape}") from None
    e = np.exp(_stable_shift(s, -1))
    tot = e.sum(axis=-1, keepdims=True)
    p = np.divide(e, tot, out=np.zeros_like(e), where=tot > 0)
    out = np.matmul(p, v.data)

    def bw(g):
        if v.requires_grad:
            _accum(v, np.matmul(np.swapaxes(p, -1, -2), g))
        if q.requires_grad or k.requires_grad:
            dp = np.matmul(g, np.swapaxes(v.data, -1, -2))
            ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) * scale
            if q.requires_grad:
                _accum(q, np.matmul(ds, k.data))
            if k.requires_grad:
                _accum(k, np.matmul(np.swapaxes(ds, -1, -2), q.data))

    return _make(out, (q, k, v), "attention", bw)


# -- backward ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, leaves: Iterable[Tensor] | None = None) -> dict:
    """Populate ``.grad`` on every leaf reachable from scalar ``loss``.

    Returns a map ``{leaf: gradient}``. Leaves passed explicitly but not
    reached get a zero gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss) if loss.requires_grad else []
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    grads = {}
    for node in reversed(order):
        if node._backward is not None:
            if node.grad is not None:
                node._backward(node.grad)
            if node is not loss:
                node.grad = None
        elif node.requires_grad:
            grads[node] = node.grad if node.grad is not None else np.zeros_like(node.data)
    if loss._backward is not None:
        loss.grad = None
    for leaf in leaves or ():
        if leaf not in grads:
            leaf.grad = np.zeros_like(leaf.data)
            grads[leaf] = leaf.grad
    return grads
