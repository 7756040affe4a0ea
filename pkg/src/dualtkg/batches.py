"""Per-timestamp batches: queries, recent snapshots and view graphs.

History only ever grows with facts strictly before the batch timestamp; the
facts of a batch are revealed to the history after its graphs are built.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .data import HistoryIndex, QuerySet, Snapshot, build_query_sets
from .views import build_view_batch


@dataclass(frozen=True)
class TimestepBatch:
    timestamp: int
    queries: QuerySet
    recent: tuple  # last L snapshots before the timestamp, chronological
    views: dict  # direction -> (evidence ViewGraph, dynamics ViewGraph)


def prepare_batches(query_snapshots: Sequence[Snapshot], prior_snapshots: Sequence[Snapshot],
                    rule_index, num_relations: int, history_len: int, cap_n: int,
                    skip_without_history: bool = False) -> list[TimestepBatch]:
    """Build batches for ``query_snapshots`` given everything known before them.

    All snapshots are expected to be inverse-augmented.
    """
    history = HistoryIndex(prior_snapshots)
    recent = deque(prior_snapshots[-history_len:] if history_len else (), maxlen=history_len)
    batches = []
    for snap in query_snapshots:
        if recent and recent[-1].timestamp >= snap.timestamp:
            raise ValueError("query snapshots must come after the prior snapshots, in order")
        if recent or not skip_without_history:
            qs = build_query_sets(snap, num_relations)
            views = build_view_batch(qs, history, rule_index, cap_n)
            batches.append(TimestepBatch(snap.timestamp, qs, tuple(recent), views))
        history.extend(snap)
        recent.append(snap)
    return batches
