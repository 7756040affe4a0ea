import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dualtkg.data import HistoryIndex, Snapshot, augment_inverse, build_query_sets, to_snapshots
from dualtkg.rules import RuleIndex, TemporalRule, mine_rules
from dualtkg.views import (
    DYNAMICS,
    build_dynamics_graph,
    build_evidence_graph,
    build_view_batch,
    retrieve_dynamics,
)
from oracles import augment, brute_force_dynamics, random_tkg


def _history(facts):
    return HistoryIndex(to_snapshots(np.asarray(facts)))


def test_evidence_example():
    history = _history([(3, 7, 4, 1), (3, 7, 5, 2), (3, 7, 4, 2), (3, 8, 9, 2), (3, 7, 6, 9)])
    q = build_query_sets(augment_inverse([Snapshot(5, [(3, 7, 1, 5)])], 10)[0], 10).raw
    g = build_evidence_graph(q, history, 5)
    assert sorted(g.edges()) == [(3, 7, 4), (3, 7, 5)]
    assert g.delta_t is None


def test_dynamics_example_with_cap():
    rules = RuleIndex([TemporalRule(7, 2, 0.9, 10, 9), TemporalRule(7, 3, 0.5, 10, 5)])
    history = _history([(1, 2, 4, 1), (1, 2, 5, 3), (1, 3, 6, 4), (1, 3, 8, 4), (1, 2, 9, 8)])
    got = retrieve_dynamics(1, 7, 6, history, rules, cap_n=3)
    assert got == [(2, 5, 3), (2, 4, 1), (3, 6, 4)]
    q = build_query_sets(Snapshot(6, [(1, 7, 0, 6)]), 10).raw
    g = build_dynamics_graph(q, history, rules, 3, 6)
    assert g.edges() == [(1, 2, 5, 3), (1, 2, 4, 5), (1, 3, 6, 2)]
    assert g.per_query_counts.tolist() == [3]


def test_no_rules_no_edges():
    q = build_query_sets(Snapshot(6, [(1, 7, 0, 6)]), 10).raw
    g = build_dynamics_graph(q, _history([(1, 2, 4, 1)]), RuleIndex(), 10, 6)
    assert len(g) == 0 and g.view == DYNAMICS


def test_retrieval_matches_oracle_on_random_graphs():
    rng = np.random.default_rng(11)
    for trial in range(30):
        facts = augment(random_tkg(rng, 10, 4, 12, 80), 4)
        index = mine_rules(to_snapshots(facts[facts[:, 3] < 8]), min_support=1)
        history = _history(facts)
        cap = int(rng.integers(1, 8))
        for s, r in {(int(a), int(b)) for a, b, _, _ in facts.tolist()}:
            t_q = int(rng.integers(1, 13))
            bodies = [rule.body_relation for rule in index.rules_for(r)]
            expected = brute_force_dynamics(facts.tolist(), bodies, s, t_q, cap)
            got = retrieve_dynamics(s, r, t_q, history, index, cap)
            assert got == expected
            assert len(got) <= cap
            assert all(t < t_q for _, _, t in got)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_graph_never_leaks_future(seed, cap):
    rng = np.random.default_rng(seed)
    facts = augment(random_tkg(rng, 8, 3, 10, 50), 3)
    snaps = to_snapshots(facts)
    index = mine_rules(snaps, min_support=1)
    qs = build_query_sets(snaps[-1], 3)
    history = HistoryIndex(snaps[:-1])
    for direction, (ev, dy) in build_view_batch(qs, history, index, cap).items():
        assert np.all(dy.delta_t >= 1)
        assert np.all(dy.per_query_counts <= cap)
        # every evidence edge matches a query key
        keys = {tuple(k) for k in qs.side(direction).keys.tolist()}
        assert all((s, r) in keys for s, r, _ in ev.edges())
        past = {(s, r, o) for s, r, o, t in facts.tolist() if t < qs.timestamp}
        assert set(ev.edges()) <= past
