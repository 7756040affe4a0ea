"""Convolutional decoders, score fusion and the training objectives."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import GatedBlock


class ConvTransE(nn.Module):
    """Two-channel convolutional decoder producing a d-vector per query.

    ``score(a, b, candidates) = decode(a, b) @ candidates.T``.
    """

    def __init__(self, dim: int, kernels: int = 50, width: int = 3, dropout: float = 0.2):
        super().__init__()
        self.dim = dim
        self.conv = nn.Conv1d(2, kernels, width, padding=width // 2)
        self.fc = nn.Linear(kernels * dim, dim)
        self.input_drop = nn.Dropout(dropout)
        self.feature_drop = nn.Dropout(dropout)

    def forward(self, first, second):
        if first.shape[-1] != self.dim or second.shape[-1] != self.dim:
            raise ValueError(f"decoder expects dimension {self.dim}")
        x = self.input_drop(torch.stack([first, second], dim=1))
        x = self.feature_drop(F.relu(self.conv(x)))
        return self.fc(x.flatten(1))

    def score(self, first, second, candidates):
        return self.forward(first, second) @ candidates.t()


def fuse_scores(*view_scores: torch.Tensor) -> torch.Tensor:
    if not view_scores:
        raise ValueError("no view scores to fuse")
    shape = view_scores[0].shape
    fused = view_scores[0]
    for s in view_scores[1:]:
        if s.shape != shape:
            raise ValueError(f"score shape mismatch: {tuple(s.shape)} vs {tuple(shape)}")
        fused = fused + s
    return fused


class QueryProjector(nn.Module):
    """Maps ``[e_s || r]`` of one view to a contrastive query vector."""

    def __init__(self, dim: int, dropout: float = 0.2):
        super().__init__()
        self.block = GatedBlock(2 * dim, dim, dropout=dropout)

    def forward(self, subjects, relations):
        return self.block(torch.cat([subjects, relations], dim=-1))


def info_nce(z_d: torch.Tensor, z_e: torch.Tensor, temperature: float,
             normalize: bool = True) -> torch.Tensor:
    """Symmetric InfoNCE over a batch; row ``i`` of each side is the positive pair.

    The denominator runs over the whole batch including the positive.
    """
    if len(z_d) == 0:
        return z_d.new_zeros(())
    if normalize:
        z_d = F.normalize(z_d, dim=-1)
        z_e = F.normalize(z_e, dim=-1)
    logits = z_d @ z_e.t() / temperature
    target = torch.arange(len(z_d), device=z_d.device)
    return F.cross_entropy(logits, target) + F.cross_entropy(logits.t(), target)


def cross_entropy(scores: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    if len(targets) == 0:
        return scores.new_zeros(())
    if targets.min() < 0 or targets.max() >= scores.shape[-1]:
        raise ValueError("answer id out of range")
    return F.cross_entropy(scores, targets)


@dataclass
class LossBreakdown:
    entity_ce: torch.Tensor
    relation_ce: torch.Tensor
    contrastive: torch.Tensor
    alpha: float
    mu: float
    total: torch.Tensor

    def as_floats(self):
        return {
            "entity_ce": float(self.entity_ce.detach()),
            "relation_ce": float(self.relation_ce.detach()),
            "contrastive": float(self.contrastive.detach()),
            "total": float(self.total.detach()),
        }


def task_loss(entity_scores, entity_targets, relation_scores, relation_targets, alpha=0.7):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return cross_entropy(entity_scores, entity_targets), cross_entropy(relation_scores, relation_targets)


def total_loss(entity_ce, relation_ce, contrastive, alpha=0.7, mu=0.2) -> LossBreakdown:
    if mu < 0:
        raise ValueError("mu must be non-negative")
    total = alpha * entity_ce + (1.0 - alpha) * relation_ce
    if mu:
        total = total + mu * contrastive
    return LossBreakdown(entity_ce, relation_ce, contrastive, alpha, mu, total)
