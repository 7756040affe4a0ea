"""Small building blocks shared by the encoders and decoders."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConvComposition(nn.Module):
    """1-D convolutional composition of ``in_channels`` d-vectors into one d-vector.

    The inputs are stacked as channels, convolved with ``kernels`` filters of
    width 3 (padding 1), flattened and linearly projected back to ``dim``.
    """

    def __init__(self, in_channels: int, dim: int, kernels: int = 2, width: int = 3):
        super().__init__()
        self.conv = nn.Conv1d(in_channels, kernels, width, padding=width // 2)
        self.proj = nn.Linear(kernels * dim, dim)

    def forward(self, *vectors: torch.Tensor) -> torch.Tensor:
        x = torch.stack(vectors, dim=1)
        if x.shape[1] != self.conv.in_channels:
            raise ValueError(f"expected {self.conv.in_channels} inputs, got {x.shape[1]}")
        x = self.conv(x)
        return self.proj(x.flatten(1))


class GEGLU(nn.Module):
    """Gated linear unit with a GELU gate."""

    def __init__(self, dim_in: int, dim_out: int):
        super().__init__()
        self.proj = nn.Linear(dim_in, 2 * dim_out)

    def forward(self, x):
        value, gate = self.proj(x).chunk(2, dim=-1)
        return value * F.gelu(gate)


class GatedBlock(nn.Module):
    """LayerNorm -> GEGLU -> Dropout -> Linear."""

    def __init__(self, dim_in: int, dim_out: int, hidden: int | None = None, dropout: float = 0.2):
        super().__init__()
        hidden = hidden or dim_out
        self.norm = nn.LayerNorm(dim_in)
        self.glu = GEGLU(dim_in, hidden)
        self.drop = nn.Dropout(dropout)
        self.out = nn.Linear(hidden, dim_out)

    def forward(self, x):
        return self.out(self.drop(self.glu(self.norm(x))))


def uniform_embedding(rows: int, dim: int) -> nn.Parameter:
    bound = 1.0 / math.sqrt(dim)
    return nn.Parameter(torch.empty(rows, dim).uniform_(-bound, bound))


def segment_softmax(logits: torch.Tensor, index: torch.Tensor, num_segments: int) -> torch.Tensor:
    """Softmax of ``logits`` within groups sharing the same ``index``."""
    if logits.numel() == 0:
        return logits
    peak = torch.full((num_segments,), float("-inf"), dtype=logits.dtype, device=logits.device)
    peak = peak.scatter_reduce(0, index, logits.detach(), reduce="amax", include_self=True)
    weights = torch.exp(logits - peak[index])
    totals = torch.zeros(num_segments, dtype=logits.dtype, device=logits.device)
    totals = totals.index_add(0, index, weights)
    return weights / totals[index]
