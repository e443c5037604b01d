"""Planted-signal corpora: item clusters from the synthetic embedder and users who mostly stay in-cluster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import InteractionLog, Item, ItemCorpus
from .embed import SyntheticEmbedSpec, cluster_of


@dataclass(frozen=True)
class PlantedSpec:
    n_items: int = 500
    n_users: int = 2000
    p_stay: float = 0.9
    min_len: int = 5
    max_len: int = 10
    seed: int = 0


def planted_corpus(n_items: int, embed: SyntheticEmbedSpec) -> ItemCorpus:
    width = len(str(n_items - 1))
    items = []
    for j in range(n_items):
        item_id = f"item{j:0{width}d}"
        items.append(Item(item_id, f"Item {j}", f"cluster {cluster_of(item_id, embed)}"))
    return ItemCorpus(items)


def planted_logs(corpus: ItemCorpus, embed: SyntheticEmbedSpec, spec: PlantedSpec) -> list[InteractionLog]:
    """Each next item stays in the current item's cluster with probability ``p_stay``
    (uniform over the cluster's other items), otherwise is uniform over other clusters."""
    ids = corpus.ids
    clusters = np.array([cluster_of(i, embed) for i in ids])
    members = {c: np.flatnonzero(clusters == c) for c in np.unique(clusters)}
    rng = np.random.default_rng([spec.seed, 11])
    logs = []
    for u in range(spec.n_users):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        cur = int(rng.integers(len(ids)))
        seq = [cur]
        for _ in range(length - 1):
            c = clusters[cur]
            same = members[c][members[c] != cur]
            if len(same) and rng.random() < spec.p_stay:
                cur = int(rng.choice(same))
            else:
                other = np.flatnonzero(clusters != c)
                cur = int(rng.choice(other)) if len(other) else int(rng.choice(same))
            seq.append(cur)
        logs.append(InteractionLog(f"user{u:05d}", tuple(ids[i] for i in seq)))
    return logs
