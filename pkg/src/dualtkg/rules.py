"""One-hop temporal rule mining.

A rule ``(A, r_h, B, t2) <- (A, r_b, B, t1), t2 > t1`` is counted exhaustively:
``body_support`` is the number of training facts with relation ``r_b`` and
``rule_support`` the number of those facts that are followed, for the same
entity pair, by a fact with relation ``r_h`` at a strictly later timestamp.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .data import HistoryIndex, Snapshot
from .views import retrieve_dynamics


@dataclass(frozen=True)
class TemporalRule:
    head_relation: int
    body_relation: int
    confidence: float
    body_support: int
    rule_support: int

    def to_json(self):
        return {
            "head": self.head_relation,
            "body": self.body_relation,
            "conf": self.confidence,
            "body_sup": self.body_support,
            "rule_sup": self.rule_support,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["head"]), int(obj["body"]), float(obj["conf"]),
                   int(obj["body_sup"]), int(obj["rule_sup"]))


def rule_order(rule: TemporalRule):
    return (-rule.confidence, -rule.rule_support, rule.body_relation)


class RuleIndex:
    """Rules grouped by head relation, each list in :func:`rule_order`."""

    def __init__(self, rules: Iterable[TemporalRule] = ()):
        grouped = defaultdict(list)
        for rule in rules:
            grouped[rule.head_relation].append(rule)
        self._by_head = {h: tuple(sorted(rs, key=rule_order)) for h, rs in grouped.items()}

    def rules_for(self, head: int) -> tuple:
        return self._by_head.get(head, ())

    def heads(self):
        return sorted(self._by_head)

    def __iter__(self):
        for head in self.heads():
            yield from self._by_head[head]

    def __len__(self):
        return sum(len(v) for v in self._by_head.values())

    def __contains__(self, head):
        return head in self._by_head

    def save(self, path: str):
        with open(path, "w") as fh:
            for rule in self:
                fh.write(json.dumps(rule.to_json()) + "\n")

    @classmethod
    def load(cls, path: str) -> "RuleIndex":
        with open(path) as fh:
            return cls(TemporalRule.from_json(json.loads(line)) for line in fh if line.strip())


def count_groundings(snapshots: Sequence[Snapshot]):
    """Return ``(body_support, rule_support)`` counters.

    ``body_support[r_b]`` counts facts; ``rule_support[(r_b, r_h)]`` counts the
    body facts followed by some later ``r_h`` fact on the same ordered pair.
    """
    # per ordered entity pair: relation -> latest timestamp, and the list of (relation, t)
    latest = defaultdict(dict)
    occurrences = defaultdict(list)
    body_support = Counter()
    for snap in snapshots:
        for a, r, b, t in snap.facts.tolist():
            pair_latest = latest[(a, b)]
            if pair_latest.get(r, -1) < t:
                pair_latest[r] = t
            occurrences[(a, b)].append((r, t))
            body_support[r] += 1

    rule_support = Counter()
    for pair, occ in occurrences.items():
        pair_latest = list(latest[pair].items())
        for r_b, t1 in occ:
            for r_h, t_last in pair_latest:
                if t_last > t1:
                    rule_support[(r_b, r_h)] += 1
    return body_support, rule_support


def mine_rules(train_snapshots: Sequence[Snapshot], min_support: int = 3,
               max_rules_per_head: int = 50) -> RuleIndex:
    if not any(len(s) for s in train_snapshots):
        raise ValueError("cannot mine rules from an empty training set")
    body_support, rule_support = count_groundings(train_snapshots)
    by_head = defaultdict(list)
    for (r_b, r_h), sup in rule_support.items():
        body = body_support[r_b]
        if body < min_support:
            continue
        by_head[r_h].append(TemporalRule(r_h, r_b, sup / body, body, sup))
    kept = []
    for head, rules in by_head.items():
        rules.sort(key=rule_order)
        kept.extend(rules[:max_rules_per_head])
    return RuleIndex(kept)


@dataclass(frozen=True)
class RuleCoverageReport:
    rule_coverage: float
    retrieved_coverage: float
    avg_retrieved_facts: float
    num_queries: int

    def to_dict(self):
        return asdict(self)


def coverage_report(rule_index: RuleIndex, test_query_sets, history_snapshots, cap_n: int
                    ) -> RuleCoverageReport:
    """Coverage statistics of rule-based retrieval over test queries.

    ``history_snapshots`` are the facts known before the first test timestamp;
    each test snapshot's own facts join the history after its queries are
    answered, mirroring the evaluation protocol.  Every directed test fact
    (raw and inverse) counts as one query.
    """
    history = HistoryIndex(history_snapshots)
    n_queries = covered = retrieved = 0
    total_facts = 0
    for qs in test_query_sets:
        for side in (qs.raw, qs.inverse):
            for (s, r), answers in zip(side.keys.tolist(), side.answers):
                weight = len(answers)
                n_queries += weight
                if r in rule_index:
                    covered += weight
                got = len(retrieve_dynamics(s, r, qs.timestamp, history, rule_index, cap_n))
                total_facts += got * weight
                if got:
                    retrieved += weight
        history.extend(Snapshot(qs.timestamp, _query_set_facts(qs)))
    if n_queries == 0:
        return RuleCoverageReport(0.0, 0.0, 0.0, 0)
    return RuleCoverageReport(covered / n_queries, retrieved / n_queries,
                              total_facts / n_queries, n_queries)


def _query_set_facts(qs):
    rows = []
    for side in (qs.raw, qs.inverse):
        for (s, r), answers in zip(side.keys.tolist(), side.answers):
            rows.extend((s, r, o, qs.timestamp) for o in answers)
    return rows
