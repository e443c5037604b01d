"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, eps: float = 1e-4) -> np.ndarray:
    out = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = float(fn().data)
        flat[i] = old - eps
        fm = float(fn().data)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-4,
                    max_entries: int | None = None, rng: np.random.Generator | None = None,
                    floor: float = 1e-8) -> float:
    """Largest relative error between analytic and finite-difference gradients.

    ``fn`` must rebuild the graph from ``inputs`` on each call and return a
    scalar. With ``max_entries`` only that many randomly chosen coordinates of
    each input are perturbed. ``floor`` bounds the error denominator so inputs
    whose true gradient is zero are compared in absolute terms.
    """
    loss = fn()
    grads = backward(loss, inputs)
    worst = 0.0
    for t in inputs:
        analytic = grads[t]
        if max_entries is None or t.data.size <= max_entries:
            numeric = numeric_grad(fn, t, eps)
            worst = max(worst, relative_error(analytic, numeric, floor))
            continue
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(t.data.size, size=max_entries, replace=False)
        flat = t.data.reshape(-1)
        num = np.empty(max_entries)
        for j, i in enumerate(picks):
            old = flat[i]
            flat[i] = old + eps
            fp = float(fn().data)
            flat[i] = old - eps
            fm = float(fn().data)
            flat[i] = old
            num[j] = (fp - fm) / (2 * eps)
        worst = max(worst, relative_error(analytic.reshape(-1)[picks], num, floor))
    return worst
