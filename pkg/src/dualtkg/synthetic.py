"""Synthetic temporal knowledge graphs with planted one-hop rules.

Entity pairs live in episodes.  During an episode the pair emits one fact per
timestamp and its relation advances cyclically, so ``(s, r, o, t)`` is always
followed by ``(s, (r + 1) % R, o, t + 1)`` until the episode ends.  At any
time an entity belongs to at most one active pair.
"""

from __future__ import annotations

import numpy as np

from .data import DatasetStats, to_snapshots


def planted_rule_facts(num_entities=100, num_relations=4, num_timestamps=60, active_pairs=20,
                       episode_length=10, seed=0) -> np.ndarray:
    if 2 * active_pairs > num_entities:
        raise ValueError("not enough entities for the requested number of active pairs")
    rng = np.random.default_rng(seed)
    free = set(range(num_entities))
    slots = []

    def new_episode(length):
        s, o = (int(x) for x in rng.choice(sorted(free), size=2, replace=False))
        free.difference_update((s, o))
        return {"s": s, "o": o, "r": int(rng.integers(num_relations)), "left": length}

    for k in range(active_pairs):
        # stagger episode ends so restarts are spread over time
        slots.append(new_episode(1 + (k * episode_length) // active_pairs))
    facts = []
    for t in range(num_timestamps):
        for k, slot in enumerate(slots):
            if slot["left"] == 0:
                free.update((slot["s"], slot["o"]))
                slot = slots[k] = new_episode(episode_length)
            facts.append((slot["s"], slot["r"], slot["o"], t))
            slot["r"] = (slot["r"] + 1) % num_relations
            slot["left"] -= 1
    return np.asarray(facts, dtype=np.int64)


def planted_rule_dataset(num_entities=100, num_relations=4, num_timestamps=60, active_pairs=20,
                         episode_length=10, seed=0, fractions=(0.8, 0.1, 0.1)):
    """Chronological train/valid/test split of :func:`planted_rule_facts`."""
    facts = planted_rule_facts(num_entities, num_relations, num_timestamps, active_pairs,
                               episode_length, seed)
    n_train = int(round(fractions[0] * num_timestamps))
    n_valid = int(round(fractions[1] * num_timestamps))
    cuts = {"train": (0, n_train), "valid": (n_train, n_train + n_valid),
            "test": (n_train + n_valid, num_timestamps)}
    splits = {name: to_snapshots(facts[(facts[:, 3] >= lo) & (facts[:, 3] < hi)])
              for name, (lo, hi) in cuts.items()}
    stats = DatasetStats(
        num_entities=num_entities, num_relations=num_relations, num_timestamps=num_timestamps,
        split_sizes={name: int(sum(len(s) for s in snaps)) for name, snaps in splits.items()},
        time_map=tuple(range(num_timestamps)),
    )
    return stats, splits
