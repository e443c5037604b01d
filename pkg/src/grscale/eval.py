"""Single-target ranking metrics: Recall@k, NDCG@k, miss rate, and Recall deltas."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def _ranks(rankings, targets) -> np.ndarray:
    """1-based rank of each target in its ranking, or 0 when absent."""
    if len(rankings) != len(targets):
        raise ValueError(f"{len(rankings)} rankings for {len(targets)} targets")
    out = np.zeros(len(targets), dtype=np.int64)
    for u, (r, t) in enumerate(zip(rankings, targets)):
        r = list(r)
        if len(set(r)) != len(r):
            raise ValueError(f"ranking {u} has duplicate items")
        if t in r:
            out[u] = r.index(t) + 1
    return out


def _check_k(k):
    if int(k) < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def _mean(x: np.ndarray) -> float:
    # sorted summation makes the mean independent of user order
    return math.fsum(np.sort(x)) / len(x) if len(x) else float("nan")


def recall_at_k(rankings, targets, k: int) -> float:
    _check_k(k)
    r = _ranks(rankings, targets)
    return _mean(((r > 0) & (r <= k)).astype(np.float64))


def ndcg_at_k(rankings, targets, k: int) -> float:
    _check_k(k)
    r = _ranks(rankings, targets)
    gain = np.where((r > 0) & (r <= k), 1.0 / np.log2(np.maximum(r, 1) + 1.0), 0.0)
    return _mean(gain)


def mr_at_k(rankings, targets, k: int) -> float:
    return 1.0 - recall_at_k(rankings, targets, k)


@dataclass
class EvalReport:
    recall: dict
    ndcg: dict
    mr: dict
    n_users: int
    ranks: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "mr": {str(k): v for k, v in self.mr.items()},
            "n_users": self.n_users,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        def keyed(d):
            return {int(k): float(v) for k, v in d.items()}
        return cls(keyed(obj["recall"]), keyed(obj["ndcg"]), keyed(obj["mr"]), int(obj["n_users"]))


def evaluate(rankings, targets, ks=(5, 10)) -> EvalReport:
    recall = {k: recall_at_k(rankings, targets, k) for k in ks}
    return EvalReport(
        recall=recall,
        ndcg={k: ndcg_at_k(rankings, targets, k) for k in ks},
        mr={k: 1.0 - recall[k] for k in ks},
        n_users=len(targets),
        ranks=_ranks(rankings, targets).tolist(),
    )


def delta_recall(a: EvalReport, b: EvalReport, k: int) -> float:
    return a.recall[k] - b.recall[k]


def write_report(report: EvalReport, path, extra: dict | None = None) -> None:
    obj = report.to_json()
    if extra:
        obj.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as f:
        return EvalReport.from_json(json.load(f))
