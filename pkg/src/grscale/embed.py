"""Per-item semantic embeddings: binary file IO and a planted-cluster generator.

Binary layout: 6-byte magic ``GREMB1``, u32 row count, u32 dim (both
little-endian), then row-major little-endian float32 rows. A companion JSONL
index maps ``item_id`` to row.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"GREMB1"


class EmbeddingError(ValueError):
    pass


class EmbeddingDimensionError(EmbeddingError):
    pass


class MissingEmbeddingError(EmbeddingError):
    def __init__(self, item_id: str):
        super().__init__(f"no embedding row for item_id {item_id!r}")
        self.item_id = item_id


class NonFiniteEmbeddingError(EmbeddingError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    vectors: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] != len(self.ids):
            raise EmbeddingDimensionError(f"vectors {v.shape} do not match {len(self.ids)} ids")
        if not np.all(np.isfinite(v)):
            bad = self.ids[int(np.nonzero(~np.isfinite(v).all(axis=1))[0][0])]
            raise NonFiniteEmbeddingError(f"non-finite embedding for item_id {bad!r}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.ids)})
        if len(self._index) != len(self.ids):
            raise EmbeddingError("duplicate item_id in embedding index")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def index(self) -> dict[str, int]:
        return self._index

    def __len__(self):
        return len(self.ids)

    def row(self, item_id: str) -> np.ndarray:
        try:
            return self.vectors[self._index[item_id]]
        except KeyError:
            raise MissingEmbeddingError(item_id) from None

    def rows(self, item_ids: Sequence[str]) -> np.ndarray:
        missing = [i for i in item_ids if i not in self._index]
        if missing:
            raise MissingEmbeddingError(missing[0])
        return self.vectors[[self._index[i] for i in item_ids]]

    def normalized(self) -> "EmbeddingMatrix":
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return EmbeddingMatrix(self.vectors / np.where(norms > 0, norms, 1.0), self.ids)


def index_path_for(path) -> Path:
    return Path(str(path) + ".index.jsonl")


def write_embeddings(matrix: EmbeddingMatrix, path, index_path=None) -> None:
    rows, dim = matrix.vectors.shape
    data = MAGIC + struct.pack("<II", rows, dim) + matrix.vectors.astype("<f4").tobytes()
    Path(path).write_bytes(data)
    with open(index_path or index_path_for(path), "w", encoding="utf-8") as fh:
        for i, item_id in enumerate(matrix.ids):
            fh.write(json.dumps({"item_id": item_id, "row": i}, ensure_ascii=False) + "\n")


def load_embeddings(path, corpus=None, index_path=None, expected_dim: int | None = None) -> EmbeddingMatrix:
    """Read a binary matrix and its index; every item of ``corpus`` must be covered."""
    buf = Path(path).read_bytes()
    if buf[:6] != MAGIC or len(buf) < 14:
        raise EmbeddingError(f"{path}: not a GREMB1 file")
    rows, dim = struct.unpack_from("<II", buf, 6)
    if len(buf) != 14 + 4 * rows * dim:
        raise EmbeddingDimensionError(f"{path}: header says {rows}x{dim} but payload has {len(buf) - 14} bytes")
    if expected_dim is not None and dim != expected_dim:
        raise EmbeddingDimensionError(f"{path}: dim {dim}, expected {expected_dim}")
    vectors = np.frombuffer(buf, dtype="<f4", offset=14).reshape(rows, dim).astype(np.float32)

    ids: list[str | None] = [None] * rows
    with open(index_path or index_path_for(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            r = obj["row"]
            if not 0 <= r < rows:
                raise EmbeddingDimensionError(f"index line {lineno}: row {r} outside 0..{rows - 1}")
            ids[r] = obj["item_id"]
    if any(i is None for i in ids):
        raise EmbeddingError(f"{path}: index does not cover all {rows} rows")
    bad = np.nonzero(~np.isfinite(vectors).all(axis=1))[0]
    if bad.size:
        raise NonFiniteEmbeddingError(f"{path}: non-finite values for item_id {ids[int(bad[0])]!r}")
    matrix = EmbeddingMatrix(vectors, tuple(ids))
    if corpus is not None:
        for item_id in corpus.ids:
            if item_id not in matrix.index:
                raise MissingEmbeddingError(item_id)
    return matrix


# -- synthetic generator ------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticEmbedSpec:
    dim: int = 32
    n_clusters: int = 10
    cluster_spread: float = 0.05
    seed: int = 0
    normalize: bool = False

    def validate(self, n_items: int):
        if self.dim < 1 or self.n_clusters < 1:
            raise EmbeddingError("dim and n_clusters must be positive")
        if self.n_clusters > n_items:
            raise EmbeddingError(f"n_clusters={self.n_clusters} exceeds {n_items} items")
        if self.cluster_spread < 0:
            raise EmbeddingError("cluster_spread must be non-negative")


def _item_key(item_id: str, seed: int) -> int:
    h = hashlib.blake2b(f"{seed}\x00{item_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little")


def cluster_of(item_id: str, spec: SyntheticEmbedSpec) -> int:
    return _item_key(item_id, spec.seed) % spec.n_clusters


def centroids(spec: SyntheticEmbedSpec) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=spec.seed))
    c = gen.standard_normal((spec.n_clusters, spec.dim))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def synth_embeddings(corpus, spec: SyntheticEmbedSpec) -> EmbeddingMatrix:
    """Unit-norm cluster centroid plus isotropic Gaussian noise per item.

    Cluster membership and noise are pure functions of ``(item_id, seed)``:
    noise comes from a Philox stream keyed by the item hash, so rows do not
    depend on corpus order.
    """
    ids = tuple(corpus.ids if hasattr(corpus, "ids") else corpus)
    spec.validate(len(ids))
    cents = centroids(spec)
    out = np.empty((len(ids), spec.dim), dtype=np.float64)
    for r, item_id in enumerate(ids):
        key = _item_key(item_id, spec.seed)
        noise = np.random.Generator(np.random.Philox(key=[key, spec.seed & 0xFFFFFFFFFFFFFFFF])).standard_normal(spec.dim)
        out[r] = cents[key % spec.n_clusters] + spec.cluster_spread * noise
    m = EmbeddingMatrix(out.astype(np.float32), ids)
    return m.normalized() if spec.normalize else m
