"""Residual assignment against fixed codebooks, SID collision handling and file IO."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CODEBOOK_MAGIC = b"GRSID1"


class TokenizerError(ValueError):
    pass


@dataclass(frozen=True)
class SidConfig:
    num_codebooks: int = 3
    codebook_size: int = 256
    level_sizes: tuple[int, ...] | None = None
    trainer: str = "residual-kmeans"
    seed: int = 0

    def __post_init__(self):
        if self.num_codebooks < 1:
            raise TokenizerError("num_codebooks must be >= 1")
        if self.trainer not in ("residual-kmeans", "rq-vae"):
            raise TokenizerError(f"unknown trainer {self.trainer!r}")
        sizes = self.sizes
        if len(sizes) != self.num_codebooks or min(sizes) < 2:
            raise TokenizerError(f"invalid codebook sizes {sizes}")

    @property
    def sizes(self) -> tuple[int, ...]:
        if self.level_sizes is not None:
            return tuple(int(w) for w in self.level_sizes)
        return (int(self.codebook_size),) * self.num_codebooks


class SidCodebooks:
    """``L`` codeword matrices; level ``l`` has shape ``(W_l, d)``."""

    def __init__(self, levels: Sequence[np.ndarray]):
        levels = [np.ascontiguousarray(lv, dtype=np.float32) for lv in levels]
        if not levels:
            raise TokenizerError("need at least one codebook")
        d = levels[0].shape[1]
        for lv in levels:
            if lv.ndim != 2 or lv.shape[1] != d:
                raise TokenizerError("codebooks must share the embedding dimension")
            if not np.all(np.isfinite(lv)):
                raise TokenizerError("non-finite codeword")
            lv.setflags(write=False)
        self.levels = tuple(levels)

    @property
    def dim(self) -> int:
        return self.levels[0].shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(lv.shape[0] for lv in self.levels)

    def __len__(self):
        return len(self.levels)


def _nearest(residual: np.ndarray, book: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Index of the closest codeword per row; ties go to the smallest index."""
    book64 = book.astype(np.float64)
    out = np.empty(len(residual), dtype=np.int64)
    step = max(1, chunk // max(1, len(book)))
    for s in range(0, len(residual), step):
        diff = residual[s:s + step, None, :] - book64[None, :, :]
        out[s:s + step] = np.argmin(np.einsum("nkd,nkd->nk", diff, diff), axis=1)
    return out


def assign_batch(h: np.ndarray, books: SidCodebooks):
    """Residual-quantize rows of ``h``.

    Returns ``(codes, residual_norms, recon)``: codes ``(n, L)``, the norm of
    the residual entering each level plus the final one ``(n, L + 1)``, and
    the float64 reconstruction as the running sum of chosen codewords.
    """
    h = np.asarray(h)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape[1] != books.dim:
        raise TokenizerError(f"embedding dim {h.shape[1]} != codebook dim {books.dim}")
    r = h.astype(np.float64)
    n, L = len(r), len(books)
    codes = np.empty((n, L), dtype=np.int64)
    norms = np.empty((n, L + 1))
    recon = np.zeros_like(r)
    for level, book in enumerate(books.levels):
        norms[:, level] = np.linalg.norm(r, axis=1)
        idx = _nearest(r, book)
        codes[:, level] = idx
        chosen = book[idx].astype(np.float64)
        r = r - chosen
        recon = recon + chosen
    norms[:, L] = np.linalg.norm(r, axis=1)
    return codes, norms, recon


def assign(h: np.ndarray, books: SidCodebooks):
    """Single-vector form of :func:`assign_batch`: ``(codes tuple, residual norms)``."""
    h = np.asarray(h)
    if h.ndim != 1:
        raise TokenizerError("assign expects one vector; use assign_batch for matrices")
    codes, norms, _ = assign_batch(h, books)
    return tuple(int(c) for c in codes[0]), norms[0]


def reconstruct(codes: np.ndarray, books: SidCodebooks) -> np.ndarray:
    codes = np.atleast_2d(codes)
    out = np.zeros((len(codes), books.dim))
    for level, book in enumerate(books.levels):
        out = out + book[codes[:, level]].astype(np.float64)
    return out


@dataclass
class SidAssignment:
    ids: tuple[str, ...]
    codes: np.ndarray  # (n, L)
    disambig: np.ndarray  # (n,)
    recon: np.ndarray | None = None

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        self.disambig = np.asarray(self.disambig, dtype=np.int64)
        self._row = {k: i for i, k in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __contains__(self, item_id):
        return item_id in self._row

    @property
    def num_levels(self) -> int:
        return self.codes.shape[1]

    @property
    def max_disambig(self) -> int:
        """Number of distinct disambiguation digits in use (largest collision group)."""
        return int(self.disambig.max()) + 1 if len(self.disambig) else 1

    def sid(self, item_id: str) -> tuple[int, ...]:
        r = self._row[item_id]
        return tuple(int(c) for c in self.codes[r]) + (int(self.disambig[r]),)

    def row(self, item_id: str) -> int:
        return self._row[item_id]


def disambiguate(ids: Sequence[str], codes: np.ndarray) -> np.ndarray:
    """Extra digit making every (codes, digit) unique: 0, 1, 2, ... by sorted item_id within a collision group."""
    codes = np.asarray(codes)
    groups: dict[tuple, list[int]] = {}
    for r, item_id in enumerate(ids):
        groups.setdefault(tuple(codes[r].tolist()), []).append(r)
    digits = np.zeros(len(ids), dtype=np.int64)
    for rows in groups.values():
        for k, r in enumerate(sorted(rows, key=lambda r: ids[r])):
            digits[r] = k
    return digits


def tokenize(matrix, books: SidCodebooks) -> SidAssignment:
    """Assign SIDs to every row of an :class:`~grscale.embed.EmbeddingMatrix`."""
    codes, _, recon = assign_batch(matrix.vectors, books)
    return SidAssignment(tuple(matrix.ids), codes, disambiguate(matrix.ids, codes), recon)


# -- files ----------------------------------------------------------------------------


def write_codebooks(books: SidCodebooks, path) -> None:
    parts = [CODEBOOK_MAGIC, struct.pack("<I", len(books))]
    for lv in books.levels:
        parts.append(struct.pack("<II", lv.shape[0], lv.shape[1]))
        parts.append(lv.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_codebooks(path) -> SidCodebooks:
    buf = Path(path).read_bytes()
    if not buf.startswith(CODEBOOK_MAGIC):
        raise TokenizerError(f"{path}: not a GRSID1 file")
    pos = len(CODEBOOK_MAGIC)
    (L,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    levels = []
    for _ in range(L):
        w, d = struct.unpack_from("<II", buf, pos)
        pos += 8
        levels.append(np.frombuffer(buf, dtype="<f4", count=w * d, offset=pos).reshape(w, d))
        pos += 4 * w * d
    if pos != len(buf):
        raise TokenizerError(f"{path}: trailing or missing bytes")
    return SidCodebooks(levels)


def write_assignment(sa: SidAssignment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r, item_id in enumerate(sa.ids):
            fh.write(json.dumps({"item_id": item_id, "codes": [int(c) for c in sa.codes[r]],
                                 "disambig": int(sa.disambig[r])}, ensure_ascii=False) + "\n")


def read_assignment(path) -> SidAssignment:
    ids, codes, digits = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                ids.append(obj["item_id"])
                codes.append(obj["codes"])
                digits.append(obj["disambig"])
    if len({len(c) for c in codes}) > 1:
        raise TokenizerError(f"{path}: inconsistent code lengths")
    return SidAssignment(tuple(ids), np.asarray(codes, dtype=np.int64).reshape(len(ids), -1), np.asarray(digits))
