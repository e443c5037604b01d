"""Training loops for the SID encoder-decoder and SASRec, plus the learning-rate grid search."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .. import autodiff as ad
from ..autodiff import load_checkpoint, save_checkpoint

LR_GRID = (1e-2, 1e-3, 1e-4)


class TrainingDivergence(FloatingPointError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0
    valid_k: int = 5
    eval_valid: bool = True
    max_valid_users: int | None = None
    max_steps: int | None = None


@dataclass
class TrainResult:
    model: object
    losses: list
    valid_recall: list
    steps: int

    @property
    def best_valid(self) -> float:
        return max(self.valid_recall) if self.valid_recall else float("nan")


def _pairs(examples):
    return [ex.history for ex in examples], [ex.target for ex in examples]


def _recall(ranked, targets):
    return float(np.mean([t in r for r, t in zip(ranked, targets)])) if targets else float("nan")


def _fit(model, train, valid, cfg: TrainConfig, rank_fn: Callable, metrics_path=None) -> TrainResult:
    hist, tgt = _pairs(train)
    if not hist:
        raise ValueError("no training examples")
    vhist, vtgt = _pairs(valid or [])
    if cfg.max_valid_users is not None:
        vhist, vtgt = vhist[:cfg.max_valid_users], vtgt[:cfg.max_valid_users]
    params = model.trainable()
    no_decay = [n for n in params if n.endswith((".g", ".b")) or "_b" in n.split(".")[-1]]
    opt = ad.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay, no_decay=no_decay)
    rng = np.random.default_rng([cfg.seed, 3])
    losses, recalls, step = [], [], 0
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(cfg.epochs):
            model.training = True
            order = rng.permutation(len(hist))
            total, n = 0.0, 0
            for s in range(0, len(order), cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                loss = model.loss([hist[i] for i in idx], [tgt[i] for i in idx])
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDivergence(epoch, step, value)
                grads = ad.backward(loss)
                opt.step({k: grads[p] for k, p in params.items() if p in grads})
                total += value * len(idx)
                n += len(idx)
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
            model.training = False
            losses.append(total / n)
            record = {"epoch": epoch, "loss": losses[-1]}
            if cfg.eval_valid and vhist:
                recalls.append(_recall(rank_fn(vhist, cfg.valid_k), vtgt))
                record["valid_recall@5" if cfg.valid_k == 5 else f"valid_recall@{cfg.valid_k}"] = recalls[-1]
            if sink:
                sink.write(json.dumps(record) + "\n")
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
    finally:
        model.training = False
        if sink:
            sink.close()
    return TrainResult(model, losses, recalls, step)


def train_tiger(model, split, sids=None, cfg: TrainConfig = TrainConfig(), trie=None, metrics_path=None) -> TrainResult:
    """Teacher-forced cross-entropy over the ``L + 1`` target tokens with AdamW."""
    from ..decode import batch_next_items
    from ..trie import build_item_trie

    if sids is not None:
        model.bind_items(sids)
        if trie is None:
            trie = build_item_trie(sids, model.vocab)
    if cfg.eval_valid and split.valid and trie is None:
        raise ValueError("validation decoding needs a trie or a SidAssignment")
    return _fit(model, split.train, split.valid, cfg,
                lambda h, k: batch_next_items(model, h, k, trie), metrics_path)


def train_sasrec(model, split, cfg: TrainConfig = TrainConfig(), metrics_path=None) -> TrainResult:
    """Full-softmax next-item cross-entropy with AdamW."""
    return _fit(model, split.train, split.valid, cfg, model.rank, metrics_path)


def select_lr(build: Callable, train: Callable, cfg: TrainConfig, grid=LR_GRID):
    """Train one fresh model per learning rate; keep the best final valid Recall@k.

    ``build()`` returns a new model and ``train(model, cfg)`` a :class:`TrainResult`.
    Returns ``(best_lr, best_result, {lr: valid_recall})``.
    """
    scores, best = {}, None
    for lr in grid:
        res = train(build(), replace(cfg, lr=lr, eval_valid=True))
        score = res.valid_recall[-1] if res.valid_recall else float("-inf")
        scores[lr] = score
        if best is None or score > best[1]:
            best = (lr, score, res)
    return best[0], best[2], scores


def save_model(model, path) -> None:
    tensors = {k: t.data for k, t in model.trainable().items()}
    save_checkpoint(path, tensors)


def load_model_params(model, path) -> None:
    """Copy checkpointed tensors into ``model``'s parameters (names and shapes must match)."""
    data = load_checkpoint(path)
    params = model.trainable()
    missing = set(params) ^ set(data)
    if missing:
        raise ValueError(f"checkpoint/model parameter mismatch: {sorted(missing)[:5]}")
    for k, t in params.items():
        if data[k].shape != t.data.shape:
            raise ValueError(f"shape mismatch for {k}: {data[k].shape} vs {t.data.shape}")
        t.data = data[k].astype(t.data.dtype)
