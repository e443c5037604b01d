"""Item and interaction ingestion, plus leave-one-out / cold-start splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

ROLES = ("train", "valid", "test")


class CorpusError(ValueError):
    """Malformed or inconsistent input data."""


class DanglingItemError(CorpusError):
    def __init__(self, item_id: str, user_id: str):
        super().__init__(f"user {user_id!r} references unknown item_id {item_id!r}")
        self.item_id = item_id


@dataclass(frozen=True)
class Item:
    item_id: str
    title: str
    text: str = ""


class ItemCorpus:
    """Ordered, immutable collection of items keyed by ``item_id``."""

    def __init__(self, items: Iterable[Item]):
        self._items: dict[str, Item] = {}
        for it in items:
            if it.item_id in self._items:
                raise CorpusError(f"duplicate item_id {it.item_id!r}")
            if not it.title:
                raise CorpusError(f"item {it.item_id!r} has an empty title")
            self._items[it.item_id] = it
        self._ids = tuple(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items.values())

    def __contains__(self, item_id) -> bool:
        return item_id in self._items

    def __getitem__(self, item_id: str) -> Item:
        return self._items[item_id]

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids


@dataclass(frozen=True)
class InteractionLog:
    user_id: str
    items: tuple[str, ...]


@dataclass(frozen=True)
class SplitSpec:
    scheme: str = "leave-one-out"
    cold_item_count: int = 0
    seed: int = 0
    all_prefixes: bool = True

    def __post_init__(self):
        if self.scheme not in ("leave-one-out", "cold-start"):
            raise CorpusError(f"unknown split scheme {self.scheme!r}")
        if self.cold_item_count < 0:
            raise CorpusError("cold_item_count must be non-negative")


@dataclass(frozen=True)
class Example:
    user_id: str
    role: str
    history: tuple[str, ...]
    target: str


@dataclass
class SplitAssignment:
    examples: list[Example] = field(default_factory=list)
    cold_items: tuple[str, ...] = ()

    def role(self, role: str) -> list[Example]:
        return [e for e in self.examples if e.role == role]

    @property
    def train(self) -> list[Example]:
        return self.role("train")

    @property
    def valid(self) -> list[Example]:
        return self.role("valid")

    @property
    def test(self) -> list[Example]:
        return self.role("test")


# -- ingestion ----------------------------------------------------------------------------


def _jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def read_items(path) -> ItemCorpus:
    items = []
    for lineno, obj in _jsonl(path):
        try:
            item_id, title = obj["item_id"], obj["title"]
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        text = obj.get("text", "")
        if not all(isinstance(v, str) for v in (item_id, title, text)):
            raise CorpusError(f"{path}:{lineno}: item fields must be strings")
        if not title:
            raise CorpusError(f"{path}:{lineno}: empty title for item {item_id!r}")
        items.append(Item(item_id, title, text))
    try:
        return ItemCorpus(items)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from None


def read_interactions(path) -> list[InteractionLog]:
    logs = []
    for lineno, obj in _jsonl(path):
        user, seq = obj.get("user_id"), obj.get("items")
        if not isinstance(user, str) or not isinstance(seq, list) or not all(isinstance(i, str) for i in seq):
            raise CorpusError(f"{path}:{lineno}: expected {{'user_id': str, 'items': [str, ...]}}")
        logs.append(InteractionLog(user, tuple(seq)))
    return logs


def prepare_logs(corpus: ItemCorpus, logs: Iterable[InteractionLog], max_seq_len: int, min_len: int = 3):
    """Validate references, keep the most recent ``max_seq_len`` items, drop short users."""
    if max_seq_len < min_len:
        raise CorpusError(f"max_seq_len must be at least {min_len}")
    kept, dropped, truncated = [], 0, 0
    seen_users = set()
    for log in logs:
        if log.user_id in seen_users:
            raise CorpusError(f"duplicate user_id {log.user_id!r}")
        seen_users.add(log.user_id)
        for it in log.items:
            if it not in corpus:
                raise DanglingItemError(it, log.user_id)
        if len(log.items) < min_len:
            dropped += 1
            continue
        items = log.items
        if len(items) > max_seq_len:
            items = items[-max_seq_len:]
            truncated += 1
        kept.append(InteractionLog(log.user_id, items))
    return kept, {"dropped_users": dropped, "truncated_users": truncated}


def ingest(items_path, interactions_path, max_seq_len: int = 20):
    """Read the two JSONL files.

    Returns ``(corpus, logs, stats)`` where ``stats`` counts dropped
    (fewer than 3 interactions) and truncated users. Truncation keeps the
    most recent items; it is applied after the length filter so a long
    sequence is never dropped.
    """
    corpus = read_items(items_path)
    logs, stats = prepare_logs(corpus, read_interactions(interactions_path), max_seq_len)
    return corpus, logs, stats


def write_items(corpus: ItemCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in corpus:
            fh.write(json.dumps({"item_id": it.item_id, "title": it.title, "text": it.text}, ensure_ascii=False) + "\n")


def write_interactions(logs: Iterable[InteractionLog], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(json.dumps({"user_id": log.user_id, "items": list(log.items)}, ensure_ascii=False) + "\n")


# -- splitting ------------------------------------------------------------------------


def _loo_examples(log: InteractionLog, all_prefixes: bool) -> list[Example]:
    seq = log.items
    n = len(seq)
    if n < 3:
        raise CorpusError(f"user {log.user_id!r} has {n} interactions; leave-one-out needs 3")
    out = []
    first = 1 if all_prefixes else max(n - 3, 1)
    for j in range(first, n - 2):
        out.append(Example(log.user_id, "train", seq[:j], seq[j]))
    out.append(Example(log.user_id, "valid", seq[: n - 2], seq[n - 2]))
    out.append(Example(log.user_id, "test", seq[: n - 1], seq[n - 1]))
    return out


def split(logs: Iterable[InteractionLog], spec: SplitSpec = SplitSpec()) -> SplitAssignment:
    """Per-user leave-one-out split, optionally with cold-start items held out of training.

    Train pairs are every prefix of the sequence minus its last two items
    (``spec.all_prefixes``) or only the longest such prefix.
    """
    logs = list(logs)
    examples = []
    for log in logs:
        examples.extend(_loo_examples(log, spec.all_prefixes))
    if spec.scheme == "leave-one-out":
        return SplitAssignment(examples)

    eligible = sorted({e.target for e in examples if e.role == "test"})
    if spec.cold_item_count > len(eligible):
        raise CorpusError(f"cold_item_count={spec.cold_item_count} exceeds {len(eligible)} eligible test items")
    rng = np.random.default_rng(spec.seed)
    picks = rng.choice(len(eligible), size=spec.cold_item_count, replace=False)
    cold = frozenset(eligible[i] for i in sorted(picks))
    out = []
    for e in examples:
        if e.role == "test":
            if e.target in cold:
                out.append(e)
            continue
        if e.target in cold:
            continue
        history = tuple(i for i in e.history if i not in cold)
        if history:
            out.append(Example(e.user_id, e.role, history, e.target))
    return SplitAssignment(out, tuple(sorted(cold)))


def write_split(assignment: SplitAssignment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in assignment.examples:
            fh.write(json.dumps({"user_id": e.user_id, "role": e.role, "history": list(e.history),
                                 "target": e.target}, ensure_ascii=False) + "\n")


def read_split(path) -> SplitAssignment:
    examples = []
    for lineno, obj in _jsonl(path):
        try:
            role = obj["role"]
            if role not in ROLES:
                raise CorpusError(f"{path}:{lineno}: unknown role {role!r}")
            examples.append(Example(obj["user_id"], role, tuple(obj["history"]), obj["target"]))
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
    return SplitAssignment(examples)
