"""Time-aware filtered ranking metrics and pair-level margin statistics.

Ranks are optimistic: a candidate only counts against the true entity when
its score is strictly greater.  Other true objects of the same
``(subject, relation)`` at the same timestamp are filtered out.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import torch

from .batches import TimestepBatch
from .views import DIRECTIONS, DYNAMICS, EVIDENCE

HITS_AT = (1, 3, 10)


@dataclass(frozen=True)
class RankResult:
    query_id: int
    direction: str
    rank: int


@dataclass
class MetricsReport:
    mrr: float
    hits: dict
    count: int
    per_direction: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"mrr": self.mrr, "count": self.count}
        out.update({f"hits@{k}": v for k, v in self.hits.items()})
        out["per_direction"] = self.per_direction
        return out


def time_filtered_rank(scores, target: int, filtered: Iterable[int] = ()) -> int:
    """Rank of ``target`` in one score row, ignoring ``filtered`` candidates."""
    scores = torch.as_tensor(scores)
    greater = scores > scores[target]
    drop = [o for o in filtered if o != target]
    if drop:
        greater[torch.as_tensor(drop, dtype=torch.long)] = False
    return 1 + int(greater.sum())


def rank_facts(scores: torch.Tensor, answers: Sequence[frozenset], chunk: int = 4096):
    """Filtered ranks for every ``(query, answer)`` fact of a score matrix.

    Returns ``(rows, targets, ranks)`` with facts ordered by query then target.
    """
    rows, targets = [], []
    for i, ans in enumerate(answers):
        for o in sorted(ans):
            rows.append(i)
            targets.append(o)
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    rows = torch.as_tensor(rows, dtype=torch.long)
    targets = torch.as_tensor(targets, dtype=torch.long)
    scores = scores.detach()
    ranks = []
    for start in range(0, len(rows), chunk):
        r, t = rows[start:start + chunk], targets[start:start + chunk]
        block = scores[r]
        true = block.gather(1, t.unsqueeze(1))
        greater = block > true
        fi, fo = [], []
        for j, (row, tgt) in enumerate(zip(r.tolist(), t.tolist())):
            for o in answers[row]:
                if o != tgt:
                    fi.append(j)
                    fo.append(o)
        if fi:
            greater[torch.as_tensor(fi), torch.as_tensor(fo)] = False
        ranks.append(1 + greater.sum(1))
    return rows.numpy(), targets.numpy(), torch.cat(ranks).numpy().astype(np.int64)


def _summarize(ranks: np.ndarray) -> dict:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return {"mrr": 0.0, "hits": {k: 0.0 for k in HITS_AT}, "count": 0}
    return {
        "mrr": float(np.mean(1.0 / ranks)),
        "hits": {k: float(np.mean(ranks <= k)) for k in HITS_AT},
        "count": int(len(ranks)),
    }


def compute_metrics(results: Sequence[RankResult]) -> MetricsReport:
    """MRR and Hits@k averaged over all directed queries."""
    ranks = np.asarray([r.rank for r in results], dtype=np.int64)
    if np.any(ranks < 1):
        raise ValueError("ranks must be >= 1")
    total = _summarize(ranks)
    per_direction = {}
    for direction in sorted({r.direction for r in results}):
        sub = _summarize([r.rank for r in results if r.direction == direction])
        per_direction[direction] = {"mrr": sub["mrr"], "count": sub["count"],
                                    **{f"hits@{k}": v for k, v in sub["hits"].items()}}
    return MetricsReport(total["mrr"], total["hits"], total["count"], per_direction)


@dataclass
class MarginReport:
    num_pairs: int
    mean_d: float
    mean_e: float
    mean_fused: float
    rho: float | None
    p_err_d: float
    p_err_e: float
    p_err_fused: float
    snr_d: float | None
    snr_e: float | None
    snr_fused: float | None

    def to_dict(self):
        return asdict(self)


def pair_margins(scores_d, scores_e, rows, targets, answers):
    """Margins ``(gamma_d, gamma_e, gamma_fused)`` over all filtered negatives.

    Pairs are enumerated query-major, negatives in ascending entity id.
    ``gamma_fused`` is the sum of the per-view margins.
    """
    sd = np.asarray(scores_d, dtype=np.float64)
    se = np.asarray(scores_e, dtype=np.float64)
    gd, ge = [], []
    n = sd.shape[1]
    for row, tgt in zip(np.asarray(rows).tolist(), np.asarray(targets).tolist()):
        keep = np.ones(n, dtype=bool)
        keep[list(answers[row])] = False
        keep[tgt] = False
        gd.append(sd[row, tgt] - sd[row, keep])
        ge.append(se[row, tgt] - se[row, keep])
    if not gd:
        z = np.zeros(0)
        return z, z, z
    gd, ge = np.concatenate(gd), np.concatenate(ge)
    return gd, ge, gd + ge


class MarginAccumulator:
    """Streaming first and second moments of ``(gamma_d, gamma_e)`` across batches."""

    def __init__(self):
        self.n = 0
        self.mean = np.zeros(2)
        self.comoment = np.zeros((2, 2))
        self.errors = np.zeros(3, dtype=np.int64)

    def add_margins(self, gd, ge):
        gd = np.asarray(gd, dtype=np.float64)
        ge = np.asarray(ge, dtype=np.float64)
        nb = len(gd)
        if nb == 0:
            return
        x = np.stack([gd, ge])
        mean_b = x.mean(axis=1)
        centered = x - mean_b[:, None]
        com_b = centered @ centered.T
        delta = mean_b - self.mean
        total = self.n + nb
        self.comoment += com_b + np.outer(delta, delta) * self.n * nb / total
        self.mean += delta * nb / total
        self.n = total
        self.errors += [np.sum(gd <= 0), np.sum(ge <= 0), np.sum(gd + ge <= 0)]

    def add(self, scores_d, scores_e, answers):
        """Add every filtered pair of one score matrix pair (one row per query key)."""
        rows, targets = [], []
        for i, ans in enumerate(answers):
            for o in sorted(ans):
                rows.append(i)
                targets.append(o)
        self.add_margins(*pair_margins(scores_d, scores_e, rows, targets, answers)[:2])

    def report(self) -> MarginReport:
        n = self.n
        if n == 0:
            return MarginReport(0, 0.0, 0.0, 0.0, None, 0.0, 0.0, 0.0, None, None, None)
        var = self.comoment / n
        mean_d, mean_e = self.mean
        var_f = var[0, 0] + var[1, 1] + 2 * var[0, 1]
        rho = None
        if n >= 2 and var[0, 0] > 0 and var[1, 1] > 0:
            rho = float(np.clip(var[0, 1] / math.sqrt(var[0, 0] * var[1, 1]), -1.0, 1.0))

        def snr(m, v):
            return float(m / math.sqrt(v)) if v > 0 else None

        p = self.errors / n
        return MarginReport(
            num_pairs=int(n), mean_d=float(mean_d), mean_e=float(mean_e),
            mean_fused=float(mean_d + mean_e), rho=rho,
            p_err_d=float(p[0]), p_err_e=float(p[1]), p_err_fused=float(p[2]),
            snr_d=snr(mean_d, var[0, 0]), snr_e=snr(mean_e, var[1, 1]),
            snr_fused=snr(mean_d + mean_e, var_f),
        )


def margin_statistics(scores_d, scores_e, answers) -> MarginReport:
    acc = MarginAccumulator()
    acc.add(scores_d, scores_e, answers)
    return acc.report()


@torch.no_grad()
def evaluate_model(model, batches: Sequence[TimestepBatch], entity_noise=None,
                   margins: bool = False):
    """Rank every directed fact of ``batches``.

    Returns ``(MetricsReport, MarginReport | None)``; margin statistics need
    both views to be active.
    """
    was_training = model.training
    model.eval()
    results = []
    acc = MarginAccumulator() if margins else None
    query_id = 0
    try:
        for batch in batches:
            state = model.initial_state(batch.recent, batch.timestamp, entity_noise)
            for direction in DIRECTIONS:
                side = batch.queries.side(direction)
                if len(side) == 0:
                    continue
                out = model.side_forward(state, batch.views[direction], side.keys)
                _, _, ranks = rank_facts(out.fused, side.answers)
                for rank in ranks.tolist():
                    results.append(RankResult(query_id, direction, rank))
                    query_id += 1
                if acc is not None and DYNAMICS in out.scores and EVIDENCE in out.scores:
                    acc.add(out.scores[DYNAMICS].cpu().numpy(), out.scores[EVIDENCE].cpu().numpy(),
                            side.answers)
    finally:
        model.train(was_training)
    report = compute_metrics(results)
    return report, (acc.report() if acc is not None else None)


def noisy_evaluation(model, batches, noise_sigma: float, seed: int = 0):
    """Evaluate with Gaussian noise added to the base entity embeddings."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    noise = None
    if noise_sigma > 0:
        base = model.init_encoder.entity_embedding
        gen = torch.Generator(device="cpu").manual_seed(seed)
        noise = torch.randn(base.shape, generator=gen, dtype=base.dtype).to(base.device) * noise_sigma
    report, _ = evaluate_model(model, batches, entity_noise=noise)
    return report
