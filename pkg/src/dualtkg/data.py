"""Temporal knowledge graph loading, snapshots and query sets.

Quadruples are stored as ``int64`` arrays of shape ``(n, 4)`` with columns
``(subject, relation, object, timestamp)``.  Timestamps are re-indexed to
consecutive ordinals shared by all splits, so ``delta_t`` values computed
downstream are in ordinal units.
"""

from __future__ import annotations

import bisect
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class Snapshot:
    """All facts sharing one ordinal timestamp."""

    timestamp: int
    facts: np.ndarray  # (n, 4) int64

    def __post_init__(self):
        facts = np.asarray(self.facts, dtype=np.int64).reshape(-1, 4)
        if len(facts) and not np.all(facts[:, 3] == self.timestamp):
            raise DatasetError(f"snapshot {self.timestamp} holds facts from another timestamp")
        facts.setflags(write=False)
        object.__setattr__(self, "facts", facts)

    def __len__(self):
        return len(self.facts)


@dataclass(frozen=True)
class DatasetStats:
    num_entities: int
    num_relations: int
    num_timestamps: int
    split_sizes: dict
    # ordinal -> raw timestamp as found in the files
    time_map: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "num_entities": self.num_entities,
            "num_relations": self.num_relations,
            "num_timestamps": self.num_timestamps,
            "split_sizes": dict(self.split_sizes),
            "time_map": [int(t) for t in self.time_map],
        }


@dataclass(frozen=True)
class DirectedQueries:
    """Unique ``(subject, relation)`` queries of one direction with answer sets."""

    keys: np.ndarray  # (q, 2)
    answers: tuple  # tuple of frozenset, aligned with keys

    def __len__(self):
        return len(self.keys)

    @property
    def num_facts(self):
        return sum(len(a) for a in self.answers)

    def fact_pairs(self):
        """Flatten to one row per fact: ``(query_index, target)`` arrays, targets ascending."""
        rows, targets = [], []
        for i, ans in enumerate(self.answers):
            for o in sorted(ans):
                rows.append(i)
                targets.append(o)
        return np.asarray(rows, dtype=np.int64), np.asarray(targets, dtype=np.int64)


@dataclass(frozen=True)
class QuerySet:
    timestamp: int
    raw: DirectedQueries
    inverse: DirectedQueries
    # (subject, object) -> base relations; keys and answer sets
    relation_queries: DirectedQueries

    def side(self, direction: str) -> DirectedQueries:
        if direction == "raw":
            return self.raw
        if direction == "inverse":
            return self.inverse
        raise KeyError(direction)


def _empty_queries():
    return DirectedQueries(np.zeros((0, 2), dtype=np.int64), ())


def _group(pairs: Iterable[tuple[int, int, int]]) -> DirectedQueries:
    grouped = defaultdict(set)
    for a, b, target in pairs:
        grouped[(a, b)].add(target)
    if not grouped:
        return _empty_queries()
    keys = sorted(grouped)
    return DirectedQueries(
        np.asarray(keys, dtype=np.int64).reshape(-1, 2),
        tuple(frozenset(grouped[k]) for k in keys),
    )


def read_quadruples(path: str) -> np.ndarray:
    """Parse a whitespace separated ``s r o t [ignored]`` file."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (4, 5):
                raise DatasetError(f"{path}:{lineno}: expected 4 or 5 columns, got {len(parts)}")
            try:
                rows.append([int(p) for p in parts[:4]])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: non-integer field ({exc})") from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, 4)


def read_stat(path: str) -> tuple[int, int]:
    if not os.path.exists(path):
        raise DatasetError(f"missing stat file: {path}")
    with open(path) as fh:
        parts = fh.read().split()
    if len(parts) < 2:
        raise DatasetError(f"{path}: expected 'num_entities num_relations'")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise DatasetError(f"{path}: non-integer counts") from None


def to_snapshots(facts: np.ndarray) -> list[Snapshot]:
    """Group facts by timestamp (ascending), dropping duplicates inside a timestamp."""
    facts = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
    if len(facts) == 0:
        return []
    unique = np.unique(facts, axis=0)  # lexicographic: keeps a stable, deterministic order
    dropped = len(facts) - len(unique)
    if dropped:
        logger.info("dropped %d duplicate quadruples within snapshots", dropped)
    order = np.lexsort((unique[:, 2], unique[:, 1], unique[:, 0], unique[:, 3]))
    unique = unique[order]
    times, starts = np.unique(unique[:, 3], return_index=True)
    bounds = list(starts[1:]) + [len(unique)]
    return [Snapshot(int(t), unique[s:e]) for t, s, e in zip(times, starts, bounds)]


def load_dataset(dir_path: str, split_names: Sequence[str] = DEFAULT_SPLITS):
    """Load and validate a dataset directory.

    Returns ``(stats, {split: [Snapshot, ...]})`` with timestamps re-indexed to
    ordinals ``0..T-1`` over the union of the splits.
    """
    num_entities, num_relations = read_stat(os.path.join(dir_path, "stat.txt"))
    raw = {}
    for name in split_names:
        path = os.path.join(dir_path, f"{name}.txt")
        if not os.path.exists(path):
            raise DatasetError(f"missing split file: {path}")
        facts = read_quadruples(path)
        if len(facts) == 0:
            raise DatasetError(f"split has zero facts: {name}")
        for col, bound, what in ((0, num_entities, "entity"), (2, num_entities, "entity"),
                                 (1, num_relations, "relation")):
            bad = np.flatnonzero((facts[:, col] < 0) | (facts[:, col] >= bound))
            if len(bad):
                raise DatasetError(
                    f"{path}:{bad[0] + 1}: {what} id {facts[bad[0], col]} outside [0, {bound})")
        if np.any(facts[:, 3] < 0):
            raise DatasetError(f"{path}: negative timestamp")
        raw[name] = facts

    time_map = np.unique(np.concatenate([f[:, 3] for f in raw.values()]))
    splits = {}
    for name, facts in raw.items():
        facts = facts.copy()
        facts[:, 3] = np.searchsorted(time_map, facts[:, 3])
        splits[name] = to_snapshots(facts)
    stats = DatasetStats(
        num_entities=num_entities,
        num_relations=num_relations,
        num_timestamps=len(time_map),
        split_sizes={name: len(raw[name]) for name in raw},
        time_map=tuple(int(t) for t in time_map),
    )
    return stats, splits


def write_quadruples(path: str, snapshots: Sequence[Snapshot], time_map=None):
    with open(path, "w") as fh:
        for snap in snapshots:
            for s, r, o, t in snap.facts:
                raw_t = time_map[t] if time_map else t
                fh.write(f"{s}\t{r}\t{o}\t{raw_t}\n")


def save_dataset(dir_path: str, stats: DatasetStats, splits: dict):
    os.makedirs(dir_path, exist_ok=True)
    with open(os.path.join(dir_path, "stat.txt"), "w") as fh:
        fh.write(f"{stats.num_entities} {stats.num_relations}\n")
    for name, snaps in splits.items():
        write_quadruples(os.path.join(dir_path, f"{name}.txt"), snaps, stats.time_map or None)


def augment_inverse(snapshots: Sequence[Snapshot], num_relations: int) -> list[Snapshot]:
    """Add ``(o, r + num_relations, s, t)`` for every fact ``(s, r, o, t)``."""
    out = []
    for snap in snapshots:
        f = snap.facts
        if len(f) and f[:, 1].max() >= num_relations:
            raise DatasetError("snapshot already holds inverse relations")
        inv = np.stack([f[:, 2], f[:, 1] + num_relations, f[:, 0], f[:, 3]], axis=1)
        out.append(Snapshot(snap.timestamp, np.concatenate([f, inv]).reshape(-1, 4)))
    return out


def invert_facts(facts: np.ndarray, num_relations: int) -> np.ndarray:
    """Map each fact to its inverse image; relation ids are taken mod ``2 * num_relations``."""
    f = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
    rel = (f[:, 1] + num_relations) % (2 * num_relations)
    return np.stack([f[:, 2], rel, f[:, 0], f[:, 3]], axis=1)


def build_query_sets(snapshot: Snapshot, num_relations: int) -> QuerySet:
    f = snapshot.facts
    base = f[f[:, 1] < num_relations]
    inv = f[f[:, 1] >= num_relations]
    return QuerySet(
        timestamp=snapshot.timestamp,
        raw=_group((s, r, o) for s, r, o, _ in base.tolist()),
        inverse=_group((s, r, o) for s, r, o, _ in inv.tolist()),
        relation_queries=_group((s, o, r) for s, r, o, _ in base.tolist()),
    )


class HistoryIndex:
    """Facts grouped by ``(subject, relation)``, sorted by time.

    Extended one snapshot at a time as evaluation advances; every lookup also
    filters on ``t < t_q`` so an index that runs ahead of the query is still safe.
    """

    def __init__(self, snapshots: Iterable[Snapshot] = ()):
        self._times = defaultdict(list)
        self._objects = defaultdict(list)
        self._dirty = set()
        self.num_facts = 0
        for snap in snapshots:
            self.extend(snap)

    def extend(self, snapshot: Snapshot):
        for s, r, o, t in snapshot.facts.tolist():
            key = (s, r)
            self._times[key].append(t)
            self._objects[key].append(o)
            self._dirty.add(key)
        self.num_facts += len(snapshot)

    def _sorted(self, key):
        if key in self._dirty:
            order = sorted(range(len(self._times[key])),
                           key=lambda i: (self._times[key][i], self._objects[key][i]))
            self._times[key] = [self._times[key][i] for i in order]
            self._objects[key] = [self._objects[key][i] for i in order]
            self._dirty.discard(key)
        return self._times.get(key, []), self._objects.get(key, [])

    def lookup(self, subject: int, relation: int, before: int):
        """Facts ``(subject, relation, o, t)`` with ``t < before`` as ``[(t, o), ...]`` ascending."""
        key = (subject, relation)
        if key not in self._times:
            return []
        times, objects = self._sorted(key)
        n = bisect.bisect_left(times, before)
        return list(zip(times[:n], objects[:n]))
