"""Multi-behavior interaction logs and leave-one-out splits."""

from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRAIN, VALID, TEST = 0, 1, 2
MIN_INTERACTIONS = 3


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    behavior: int
    timestamp: int


@dataclass(frozen=True)
class BehaviorVocab:
    names: tuple[str, ...]
    target_behavior: int = 0

    def __post_init__(self):
        if len(self.names) < 1:
            raise ValueError("at least one behavior is required")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate behavior names: {self.names}")
        if not 0 <= self.target_behavior < len(self.names):
            raise ValueError(f"target_behavior {self.target_behavior} outside [0, {len(self.names)})")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise IngestError(f"unknown behavior {name!r}; vocabulary is {list(self.names)}") from None

    @property
    def target_name(self) -> str:
        return self.names[self.target_behavior]


@dataclass
class UserSequence:
    raw_id: str
    items: np.ndarray
    behaviors: np.ndarray
    timestamps: np.ndarray

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class Query:
    """A history and the interaction that follows it."""

    user: int
    raw_user: str
    items: np.ndarray
    behaviors: np.ndarray
    target_item: int
    target_behavior: int


class InteractionDataset:
    """Per-user chronological logs over a remapped item and behavior vocabulary.

    The last interaction of each user is the test target, the one before it
    the validation target, and everything earlier is training data.
    """

    def __init__(self, users: Sequence[UserSequence], item_ids: Sequence[str], behaviors: BehaviorVocab):
        self.users = list(users)
        self.item_ids = list(item_ids)
        self.behaviors = behaviors
        for u in self.users:
            if len(u) < MIN_INTERACTIONS:
                raise ValueError(f"user {u.raw_id!r} has {len(u)} interactions; need {MIN_INTERACTIONS}")
            if np.any(np.diff(u.timestamps) <= 0):
                raise ValueError(f"timestamps of user {u.raw_id!r} are not strictly increasing")
            if u.items.size and (u.items.min() < 0 or u.items.max() >= len(self.item_ids)):
                raise ValueError(f"user {u.raw_id!r} references an item outside the vocabulary")
            if u.behaviors.size and (u.behaviors.min() < 0 or u.behaviors.max() >= len(behaviors)):
                raise ValueError(f"user {u.raw_id!r} references an unknown behavior")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_behaviors(self) -> int:
        return len(self.behaviors)

    @property
    def n_interactions(self) -> int:
        return sum(len(u) for u in self.users)

    def split_markers(self, user: int) -> np.ndarray:
        n = len(self.users[user])
        marks = np.full(n, TRAIN, dtype=np.int8)
        marks[-2] = VALID
        marks[-1] = TEST
        return marks

    def train_region(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        u = self.users[user]
        return u.items[:-2], u.behaviors[:-2]

    def query(self, user: int, split: str = "test") -> Query:
        """History and target for ``split`` in {"valid", "test"}."""
        u = self.users[user]
        if split == "test":
            cut = len(u) - 1
        elif split == "valid":
            cut = len(u) - 2
        else:
            raise ValueError(f"split must be 'valid' or 'test', got {split!r}")
        return Query(user, u.raw_id, u.items[:cut], u.behaviors[:cut], int(u.items[cut]), int(u.behaviors[cut]))

    def queries(self, split: str = "test") -> list[Query]:
        return [self.query(i, split) for i in range(self.n_users)]

    def interactions(self) -> Iterable[Interaction]:
        for uid, u in enumerate(self.users):
            for it, b, t in zip(u.items, u.behaviors, u.timestamps):
                yield Interaction(uid, int(it), int(b), int(t))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.behaviors.names, self.behaviors.target_behavior)).encode())
        h.update("\x1f".join(self.item_ids).encode())
        for u in self.users:
            h.update(u.raw_id.encode() + b"\x1e")
            for arr in (u.items, u.behaviors, u.timestamps):
                h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["user", "item", "behavior", "timestamp"])
        for u in self.users:
            for it, b, t in zip(u.items, u.behaviors, u.timestamps):
                w.writerow([u.raw_id, self.item_ids[it], self.behaviors.names[b], int(t)])
        return buf.getvalue()

    def export(self, path) -> None:
        from ..numerics.checkpoint import atomic_write_text
        atomic_write_text(path, self.to_csv())


def truncate_history(seq, max_items: int = 50):
    """Keep the most recent ``max_items`` entries of ``seq`` (order preserved)."""
    if max_items < 1:
        raise ValueError("max_items must be >= 1")
    return seq[-max_items:] if len(seq) > max_items else seq


def _sniff_delimiter(line: str) -> str:
    for d in ("\t", ",", ";", "|"):
        if d in line:
            return d
    return ","


def ingest(path, behaviors: Sequence[str] | None = None, target_behavior: str | int | None = None,
           min_count: int = 5, delimiter: str | None = None) -> InteractionDataset:
    """Read a ``user,item,behavior,timestamp`` file into a filtered dataset.

    Rows are ordered per user by ``(timestamp, input order)``. Items seen fewer
    than ``min_count`` times in the whole log (before any history truncation)
    are dropped, then users left with fewer than three interactions are dropped.
    Ids are remapped in first-seen order. Equal timestamps are bumped so they
    increase strictly.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise IngestError(f"{path}: empty file")
    delim = delimiter or _sniff_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))
    cols = {"user": 0, "item": 1, "behavior": 2, "timestamp": 3}
    start = 0
    first = [c.strip().lower() for c in rows[0]]
    if set(cols) <= set(first):
        cols = {k: first.index(k) for k in cols}
        start = 1
    elif len(first) >= 4 and not _is_int(first[3]):
        start = 1

    vocab = list(behaviors) if behaviors is not None else None
    seen_behaviors: list[str] = []
    records = []  # (raw_user, raw_item, behavior_name, ts, order)
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 4:
            raise IngestError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
        try:
            user, item, beh = (row[cols[k]].strip() for k in ("user", "item", "behavior"))
            ts = int(row[cols["timestamp"]].strip())
        except (ValueError, IndexError) as exc:
            raise IngestError(f"{path}:{lineno}: malformed row {row!r} ({exc})") from None
        if vocab is not None and beh not in vocab:
            raise IngestError(f"{path}:{lineno}: unknown behavior {beh!r}; vocabulary is {vocab}")
        if vocab is None and beh not in seen_behaviors:
            seen_behaviors.append(beh)
        records.append((user, item, beh, ts, len(records)))

    names = tuple(vocab if vocab is not None else seen_behaviors)
    if isinstance(target_behavior, str):
        if target_behavior not in names:
            raise IngestError(f"unknown target behavior {target_behavior!r}; vocabulary is {list(names)}")
        target = names.index(target_behavior)
    else:
        target = int(target_behavior or 0)
    bvocab = BehaviorVocab(names, target)

    by_user: dict[str, list] = {}
    for rec in records:
        by_user.setdefault(rec[0], []).append(rec)
    for seq in by_user.values():
        seq.sort(key=lambda r: (r[3], r[4]))

    counts: Counter = Counter()
    for seq in by_user.values():
        counts.update(r[1] for r in seq)
    keep_item = {it for it, c in counts.items() if c >= min_count}

    kept_users = []
    for raw_user, seq in by_user.items():
        seq = [r for r in seq if r[1] in keep_item]
        if len(seq) >= MIN_INTERACTIONS:
            kept_users.append((raw_user, seq))

    item_index: dict[str, int] = {}
    for rec in sorted((r for _, seq in kept_users for r in seq), key=lambda r: r[4]):
        if rec[1] not in item_index:
            item_index[rec[1]] = len(item_index)

    users = []
    for raw_user, seq in kept_users:
        ts = np.array([r[3] for r in seq], dtype=np.int64)
        for i in range(1, len(ts)):
            if ts[i] <= ts[i - 1]:
                ts[i] = ts[i - 1] + 1
        users.append(UserSequence(
            raw_user,
            np.array([item_index[r[1]] for r in seq], dtype=np.int64),
            np.array([bvocab.index(r[2]) for r in seq], dtype=np.int64),
            ts,
        ))
    return InteractionDataset(users, list(item_index), bvocab)


def _is_int(s: str) -> bool:
    try:
        int(s)
        return True
    except ValueError:
        return False


def load_item_features(path, dataset: InteractionDataset, delimiter: str | None = None) -> np.ndarray:
    """Read ``item,f1,...,fd`` rows into a matrix aligned with ``dataset.item_ids``."""
    lines = Path(path).read_text().splitlines()
    delim = delimiter or _sniff_delimiter(lines[0])
    feats: dict[str, np.ndarray] = {}
    for lineno, row in enumerate(csv.reader(lines, delimiter=delim), start=1):
        if not row:
            continue
        try:
            feats[row[0].strip()] = np.array([float(v) for v in row[1:]])
        except ValueError:
            if lineno == 1:
                continue
            raise IngestError(f"{path}:{lineno}: malformed feature row") from None
    missing = [i for i in dataset.item_ids if i not in feats]
    if missing:
        raise IngestError(f"{path}: no features for {len(missing)} items, e.g. {missing[:5]}")
    mat = np.stack([feats[i] for i in dataset.item_ids])
    return mat
