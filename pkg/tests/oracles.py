"""Independent brute-force references used by the test-suite.

Nothing here imports the code paths it checks, except plain data containers.
"""

from __future__ import annotations

import math
import os

import numpy as np
import torch


def random_tkg(rng, num_entities=20, num_relations=5, num_timestamps=10, num_facts=60):
    """Random (non-augmented) quadruples, duplicates removed."""
    facts = np.stack([
        rng.integers(0, num_entities, num_facts),
        rng.integers(0, num_relations, num_facts),
        rng.integers(0, num_entities, num_facts),
        rng.integers(0, num_timestamps, num_facts),
    ], axis=1)
    return np.unique(facts, axis=0)


def augment(facts, num_relations):
    facts = np.asarray(facts)
    inv = np.stack([facts[:, 2], facts[:, 1] + num_relations, facts[:, 0], facts[:, 3]], axis=1)
    return np.concatenate([facts, inv])


def brute_force_rules(facts, min_support=1):
    """``{(r_b, r_h): (confidence, body_support, rule_support)}`` by a double loop."""
    facts = [tuple(int(x) for x in f) for f in facts]
    relations = sorted({f[1] for f in facts})
    out = {}
    for r_b in relations:
        body = [f for f in facts if f[1] == r_b]
        if len(body) < min_support:
            continue
        for r_h in relations:
            support = 0
            for a, _, b, t1 in body:
                if any(g[0] == a and g[1] == r_h and g[2] == b and g[3] > t1 for g in facts):
                    support += 1
            if support:
                out[(r_b, r_h)] = (support / len(body), len(body), support)
    return out


def brute_force_dynamics(facts, ordered_bodies, subject, t_q, cap):
    """Sort-and-truncate reference: ``[(body, o, t), ...]``."""
    out = []
    for body in ordered_bodies:
        matches = sorted({(int(t), int(o)) for s, r, o, t in facts
                          if s == subject and r == body and t < t_q},
                         key=lambda x: (-x[0], x[1]))
        for t, o in matches:
            if len(out) >= cap:
                return out
            out.append((body, o, t))
    return out


def brute_force_rank(scores, target, filtered):
    rank = 1
    for cand, value in enumerate(scores):
        if cand == target or cand in filtered:
            continue
        if value > scores[target]:
            rank += 1
    return rank


def brute_force_metrics(ranks):
    n = len(ranks)
    return {
        "mrr": sum(1.0 / r for r in ranks) / n,
        1: sum(r <= 1 for r in ranks) / n,
        3: sum(r <= 3 for r in ranks) / n,
        10: sum(r <= 10 for r in ranks) / n,
    }


def brute_force_margins(scores_d, scores_e, answers):
    """Aggregates over all filtered (query, negative) pairs, by explicit loops."""
    gd, ge = [], []
    for q, ans in enumerate(answers):
        for pos in sorted(ans):
            for neg in range(len(scores_d[q])):
                if neg == pos or neg in ans:
                    continue
                gd.append(float(scores_d[q][pos]) - float(scores_d[q][neg]))
                ge.append(float(scores_e[q][pos]) - float(scores_e[q][neg]))
    n = len(gd)
    gf = [a + b for a, b in zip(gd, ge)]
    mean = lambda xs: sum(xs) / len(xs)
    md, me, mf = mean(gd), mean(ge), mean(gf)
    sd = math.sqrt(sum((x - md) ** 2 for x in gd) / n)
    se = math.sqrt(sum((x - me) ** 2 for x in ge) / n)
    sf = math.sqrt(sum((x - mf) ** 2 for x in gf) / n)
    cov = sum((a - md) * (b - me) for a, b in zip(gd, ge)) / n
    return {
        "num_pairs": n, "mean_d": md, "mean_e": me, "mean_fused": mf,
        "rho": cov / (sd * se),
        "p_err_d": sum(x <= 0 for x in gd) / n,
        "p_err_e": sum(x <= 0 for x in ge) / n,
        "p_err_fused": sum(x <= 0 for x in gf) / n,
        "snr_d": md / sd, "snr_e": me / se, "snr_fused": mf / sf,
    }


def finite_difference_error(fn, tensors, eps=1e-6, seed=0):
    """Worst relative error between autograd and central differences.

    ``fn()`` must return a tensor that depends on each tensor in ``tensors``
    (float64 leaves with ``requires_grad``).  The output is reduced with a fixed
    random weighting so every output entry contributes.
    """
    gen = torch.Generator().manual_seed(seed)
    out = fn()
    weights = torch.randn(out.shape, generator=gen, dtype=out.dtype)

    def objective():
        return (fn() * weights).sum()

    for t in tensors:
        t.grad = None
    objective().backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t)
        numeric = torch.zeros_like(t)
        flat = t.data.view(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                plus = objective().item()
                flat[i] = orig - eps
                minus = objective().item()
                flat[i] = orig
                numeric.view(-1)[i] = (plus - minus) / (2 * eps)
        denom = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
        worst = max(worst, (analytic - numeric).norm().item() / denom)
    return worst


def icews14s_dir():
    """Path to a local ICEWS14s copy, if one was provided."""
    path = os.environ.get("DUALTKG_ICEWS14S")
    if path and os.path.exists(os.path.join(path, "stat.txt")):
        return path
    return None
