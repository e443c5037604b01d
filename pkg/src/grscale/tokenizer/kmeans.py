"""Seeded k-means (k-means++ init, Lloyd updates) and the residual trainer built on it."""

from __future__ import annotations

import numpy as np

from .quantize import SidCodebooks, SidConfig, TokenizerError, assign_batch


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(1))
    return centers


def kmeans(x: np.ndarray, k: int, iters: int, rng: np.random.Generator):
    """Lloyd's algorithm.

    Returns ``(centers, history)`` where ``history[t]`` is the mean squared
    distance to the assigned center after the t-th assignment step (the last
    entry follows the final update).
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < k:
        raise TokenizerError(f"{len(x)} points cannot seed {k} centroids")
    centers = kmeans_pp_init(x, k, rng)
    history = []
    for _ in range(iters):
        d = _sq_dists(x, centers)
        labels = d.argmin(1)
        point_err = d[np.arange(len(x)), labels]
        history.append(float(point_err.mean()))
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.nonzero(~nonempty)[0]
        if empty.size:
            # recompute against updated centers, then hand the worst-served points to empty clusters
            d = _sq_dists(x, centers)
            far = np.argsort(-d[np.arange(len(x)), d.argmin(1)], kind="stable")
            for j, p in zip(empty, far):
                centers[j] = x[p]
    history.append(float(_sq_dists(x, centers).min(1).mean()))
    return centers, history


def train_residual_kmeans(matrix, cfg: SidConfig, iters: int = 20, return_history: bool = False):
    """Fit one k-means per level on the residuals left by the previous levels.

    Level ``l`` draws its seeding from ``(cfg.seed, l)`` so the first levels
    of a deeper tokenizer coincide with a shallower one.
    """
    x = np.asarray(getattr(matrix, "vectors", matrix), dtype=np.float64)
    sizes = cfg.sizes
    if len(x) < max(sizes):
        raise TokenizerError(f"{len(x)} items but codebook size {max(sizes)}")
    levels, histories = [], []
    residual = x
    for level, w in enumerate(sizes):
        rng = np.random.default_rng([cfg.seed, level])
        centers, hist = kmeans(residual, w, iters, rng)
        book = centers.astype(np.float32)
        levels.append(book)
        histories.append(hist)
        _, _, recon = assign_batch(x, SidCodebooks(levels))
        residual = x - recon
    books = SidCodebooks(levels)
    return (books, histories) if return_history else books
