"""Query-conditioned evidence and dynamics graphs.

For a query side (raw or inverse) at timestamp ``t_q``:

* the evidence graph holds every past fact ``(s, r, o)`` matching a query's
  subject and relation, with timestamps dropped and duplicates collapsed;
* the dynamics graph holds facts retrieved through mined rules whose head is
  the query relation, most recent first, at most ``cap_n`` per query, each
  edge carrying ``delta_t = t_q - t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DirectedQueries, HistoryIndex, QuerySet

EVIDENCE = "E"
DYNAMICS = "D"
DIRECTIONS = ("raw", "inverse")


@dataclass(frozen=True)
class ViewGraph:
    view: str
    query_timestamp: int
    src: np.ndarray
    rel: np.ndarray
    dst: np.ndarray
    delta_t: np.ndarray | None = None
    # dynamics view only: facts contributed by each query, aligned with the query keys
    per_query_counts: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.src)

    @property
    def touched_entities(self):
        return set(self.src.tolist()) | set(self.dst.tolist())

    def edges(self):
        if self.delta_t is None:
            return list(zip(self.src.tolist(), self.rel.tolist(), self.dst.tolist()))
        return list(zip(self.src.tolist(), self.rel.tolist(), self.dst.tolist(),
                        self.delta_t.tolist()))

    def to_jsonl(self):
        lines = []
        for edge in self.edges():
            rec = {"view": self.view, "t_q": self.query_timestamp,
                   "src": edge[0], "rel": edge[1], "dst": edge[2]}
            if len(edge) == 4:
                rec["delta_t"] = edge[3]
            lines.append(json.dumps(rec))
        return "\n".join(lines)


def empty_graph(view: str, t_q: int, num_queries: int = 0) -> ViewGraph:
    z = np.zeros(0, dtype=np.int64)
    if view == DYNAMICS:
        return ViewGraph(view, t_q, z, z, z, z.copy(), np.zeros(num_queries, dtype=np.int64))
    return ViewGraph(view, t_q, z, z, z)


def build_evidence_graph(queries: DirectedQueries, history: HistoryIndex, t_q: int) -> ViewGraph:
    seen = set()
    edges = []
    for s, r in queries.keys.tolist():
        for _, o in history.lookup(s, r, t_q):
            if (s, r, o) not in seen:
                seen.add((s, r, o))
                edges.append((s, r, o))
    if not edges:
        return empty_graph(EVIDENCE, t_q)
    arr = np.asarray(edges, dtype=np.int64)
    return ViewGraph(EVIDENCE, t_q, arr[:, 0], arr[:, 1], arr[:, 2])


def retrieve_dynamics(subject: int, relation: int, t_q: int, history: HistoryIndex,
                      rule_index, cap_n: int):
    """Rule-guided retrieval for one query: ``[(body_relation, object, t), ...]``.

    Rules are visited in index order; within a rule, facts go newest first with
    ties broken by ascending object id.
    """
    collected = []
    seen = set()
    if cap_n <= 0:
        return collected
    for rule in rule_index.rules_for(relation):
        facts = history.lookup(subject, rule.body_relation, t_q)
        for t, o in sorted(facts, key=lambda x: (-x[0], x[1])):
            key = (rule.body_relation, o, t)
            if key in seen:
                continue
            seen.add(key)
            collected.append(key)
            if len(collected) >= cap_n:
                return collected
    return collected


def build_dynamics_graph(queries: DirectedQueries, history: HistoryIndex, rule_index,
                         cap_n: int, t_q: int) -> ViewGraph:
    seen = set()
    edges = []
    counts = np.zeros(len(queries), dtype=np.int64)
    for i, (s, r) in enumerate(queries.keys.tolist()):
        got = retrieve_dynamics(s, r, t_q, history, rule_index, cap_n)
        counts[i] = len(got)
        for body, o, t in got:
            edge = (s, body, o, t_q - t)
            # the same fact retrieved for two queries is one edge of the shared graph
            if edge not in seen:
                seen.add(edge)
                edges.append(edge)
    if not edges:
        return ViewGraph(DYNAMICS, t_q, *(np.zeros(0, dtype=np.int64) for _ in range(4)), counts)
    arr = np.asarray(edges, dtype=np.int64)
    return ViewGraph(DYNAMICS, t_q, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], counts)


def build_view_batch(query_set: QuerySet, history: HistoryIndex, rule_index, cap_n: int):
    """Evidence and dynamics graphs built separately for each query direction."""
    t_q = query_set.timestamp
    out = {}
    for direction in DIRECTIONS:
        side = query_set.side(direction)
        out[direction] = (
            build_evidence_graph(side, history, t_q),
            build_dynamics_graph(side, history, rule_index, cap_n, t_q),
        )
    return out
