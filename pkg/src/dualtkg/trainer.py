"""Training loop, early stopping and checkpoints."""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .batches import TimestepBatch, prepare_batches
from .config import TrainConfig
from .data import augment_inverse
from .evaluation import evaluate_model
from .model import DualViewModel
from .rules import RuleIndex, mine_rules
from .scoring import cross_entropy, total_loss
from .views import DIRECTIONS

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = "dualtkg-ckpt-1"


class TrainingError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


@dataclass
class Checkpoint:
    state_dict: dict
    config: dict
    num_entities: int
    num_relations: int
    epoch: int
    best_valid_mrr: float
    optimizer_state: dict | None = None
    history: list = field(default_factory=list)
    version: str = CHECKPOINT_VERSION

    def save(self, path: str):
        torch.save(self.__dict__, path)

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
        return cls(**payload)

    def build_model(self) -> DualViewModel:
        model = DualViewModel(self.num_entities, self.num_relations,
                              TrainConfig.from_dict(self.config))
        model.load_state_dict(self.state_dict)
        model.eval()
        return model


@dataclass
class PreparedData:
    """Augmented snapshots, mined rules and per-timestamp batches for every split."""

    num_entities: int
    num_relations: int
    rules: RuleIndex
    train: list
    valid: list
    test: list


def prepare_data(stats, splits: dict, config: TrainConfig, rules: RuleIndex | None = None
                 ) -> PreparedData:
    """``splits`` maps split name to raw (non-augmented) snapshots."""
    aug = {name: augment_inverse(snaps, stats.num_relations) for name, snaps in splits.items()}
    train = aug["train"]
    if rules is None:
        rules = mine_rules(train, config.min_support, config.max_rules_per_head)

    def build(query, prior, skip=False):
        return prepare_batches(query, prior, rules, stats.num_relations, config.history_len,
                               config.cap_n, skip_without_history=skip)

    valid = aug.get("valid", [])
    test = aug.get("test", [])
    return PreparedData(
        num_entities=stats.num_entities,
        num_relations=stats.num_relations,
        rules=rules,
        train=build(train, [], skip=True),
        valid=build(valid, train) if valid else [],
        test=build(test, train + valid) if test else [],
    )


def batch_loss(model: DualViewModel, batch: TimestepBatch):
    """Objective for one timestamp: both query directions, then relation prediction."""
    cfg = model.config
    state = model.initial_state(batch.recent, batch.timestamp)
    entity_terms, coa_terms = [], []
    raw_out = None
    mu = cfg.effective_mu
    for direction in DIRECTIONS:
        side = batch.queries.side(direction)
        if len(side) == 0:
            continue
        out = model.side_forward(state, batch.views[direction], side.keys)
        if direction == "raw":
            raw_out = out
        rows, targets = side.fact_pairs()
        rows = torch.as_tensor(rows, device=model.device)
        targets = torch.as_tensor(targets, device=model.device)
        entity_terms.append(cross_entropy(out.fused[rows], targets))
        if mu > 0:
            coa_terms.append(model.contrastive(out, side.keys))
    zero = model.init_encoder.entity_embedding.new_zeros(())
    entity_ce = torch.stack(entity_terms).mean() if entity_terms else zero
    contrastive = torch.stack(coa_terms).mean() if coa_terms else zero
    relation_ce = zero
    rq = batch.queries.relation_queries
    if raw_out is not None and len(rq) and cfg.alpha < 1.0:
        rows, targets = rq.fact_pairs()
        scores = model.relation_scores(raw_out, state, rq.keys)
        relation_ce = cross_entropy(scores[torch.as_tensor(rows)], torch.as_tensor(targets))
    return total_loss(entity_ce, relation_ce, contrastive, cfg.alpha, mu)


def make_optimizer(model: DualViewModel):
    return torch.optim.Adam(model.parameters(), lr=model.config.lr,
                            weight_decay=model.config.weight_decay)


def train_epoch(model: DualViewModel, optimizer, batches: Sequence[TimestepBatch]) -> dict:
    """One chronological pass; one optimizer step per timestamp."""
    model.train()
    sums = {"entity_ce": 0.0, "relation_ce": 0.0, "contrastive": 0.0, "total": 0.0}
    steps = 0
    for batch in batches:
        losses = batch_loss(model, batch)
        if not torch.isfinite(losses.total):
            raise TrainingError(
                f"non-finite loss at timestamp {batch.timestamp}",
                {"timestamp": batch.timestamp, **losses.as_floats(),
                 "num_queries": len(batch.queries.raw) + len(batch.queries.inverse)})
        optimizer.zero_grad()
        losses.total.backward()
        if model.config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), model.config.grad_clip)
        optimizer.step()
        for k, v in losses.as_floats().items():
            sums[k] += v
        steps += 1
    return {k: v / max(steps, 1) for k, v in sums.items()}


def fit(config: TrainConfig, data: PreparedData, resume: Checkpoint | None = None,
        log_path: str | None = None) -> Checkpoint:
    """Train with early stopping on validation MRR; returns the best checkpoint.

    Training stops once ``patience + 1`` consecutive epochs fail to improve the
    best validation MRR, or after ``max_epochs``.
    """
    seed_everything(config.seed)
    model = DualViewModel(data.num_entities, data.num_relations, config)
    optimizer = make_optimizer(model)
    start_epoch, best_mrr, best_state, history = 0, -math.inf, None, []
    if resume is not None:
        model.load_state_dict(resume.state_dict)
        if resume.optimizer_state:
            optimizer.load_state_dict(resume.optimizer_state)
        start_epoch, best_mrr = resume.epoch + 1, resume.best_valid_mrr
        best_state = copy.deepcopy(resume.state_dict)
        history = list(resume.history)
    best_epoch = start_epoch - 1
    stale = 0
    log = open(log_path, "a") if log_path else None
    try:
        for epoch in range(start_epoch, config.max_epochs):
            metrics = train_epoch(model, optimizer, data.train)
            valid, _ = evaluate_model(model, data.valid) if data.valid else (None, None)
            valid_mrr = valid.mrr if valid is not None else -metrics["total"]
            record = {"epoch": epoch, **metrics, "valid_mrr": valid.mrr if valid else None}
            history.append(record)
            logger.info("epoch %d: %s", epoch, record)
            if log:
                log.write(json.dumps(record) + "\n")
                log.flush()
            if valid_mrr > best_mrr:
                best_mrr, best_epoch, stale = valid_mrr, epoch, 0
                best_state = copy.deepcopy(model.state_dict())
                best_optimizer = copy.deepcopy(optimizer.state_dict())
            else:
                stale += 1
                if stale > config.patience:
                    break
    finally:
        if log:
            log.close()
    if best_state is None:
        best_state = copy.deepcopy(model.state_dict())
        best_optimizer = optimizer.state_dict()
    elif best_epoch < start_epoch:
        best_optimizer = resume.optimizer_state if resume else None
    return Checkpoint(
        state_dict=best_state, config=config.to_dict(), num_entities=data.num_entities,
        num_relations=data.num_relations, epoch=best_epoch, best_valid_mrr=best_mrr,
        optimizer_state=best_optimizer, history=history,
    )
