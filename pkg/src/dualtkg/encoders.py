"""Relation decomposition and the two view-specific graph attention encoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .initialization import RRELU_LOWER, RRELU_UPPER, EmbeddingState
from .layers import ConvComposition, GatedBlock, segment_softmax
from .views import DYNAMICS, EVIDENCE, ViewGraph

ATTENTION_SLOPE = 0.2


class RelationDecomposer(nn.Module):
    """``r_hat = (1 + g(r)) * r`` with ``g`` = Linear(Dropout(GEGLU(LayerNorm(r))))."""

    def __init__(self, dim: int, dropout: float = 0.2):
        super().__init__()
        self.gate = GatedBlock(dim, dim, dropout=dropout)

    def forward(self, relations):
        return (1.0 + self.gate(relations)) * relations


class TimeEncoder(nn.Module):
    """Cosine time features ``sqrt(1/d) * cos(w * dt + p)``."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.freq = nn.Parameter(torch.from_numpy(1.0 / 10 ** np.linspace(0, 9, dim)).float())
        self.phase = nn.Parameter(torch.zeros(dim))

    def forward(self, delta_t):
        dt = torch.as_tensor(delta_t, dtype=self.freq.dtype, device=self.freq.device)
        return (1.0 / self.dim) ** 0.5 * torch.cos(dt.unsqueeze(-1) * self.freq + self.phase)


@dataclass(frozen=True)
class GraphTensors:
    num_entities: int
    src: torch.Tensor
    rel: torch.Tensor
    dst: torch.Tensor
    delta_t: torch.Tensor | None = None

    @classmethod
    def from_view(cls, graph: ViewGraph, num_entities: int, device=None):
        def t(a):
            return torch.as_tensor(a, dtype=torch.long, device=device)
        dt = None if graph.delta_t is None else t(graph.delta_t)
        return cls(num_entities, t(graph.src), t(graph.rel), t(graph.dst), dt)

    def __len__(self):
        return len(self.src)


class ViewAttentionLayer(nn.Module):
    """One attention + message passing layer over incoming edges of each entity."""

    def __init__(self, dim: int, use_time: bool, kernels: int = 2, dropout: float = 0.2):
        super().__init__()
        self.use_time = use_time
        width = 4 * dim if use_time else 3 * dim
        self.att_inner = nn.Linear(width, dim)
        self.att_outer = nn.Linear(dim, 1, bias=False)
        self.compose = ConvComposition(1, dim, kernels)
        self.w_msg = nn.Linear(dim, dim, bias=False)
        self.w_self = nn.Linear(dim, dim, bias=False)
        self.act = nn.RReLU(RRELU_LOWER, RRELU_UPPER)
        self.drop = nn.Dropout(dropout)

    def attention(self, entities, relations, graph: GraphTensors, time_features=None):
        parts = [entities[graph.src], relations[graph.rel], entities[graph.dst]]
        if self.use_time:
            parts.append(time_features)
        hidden = F.leaky_relu(self.att_inner(torch.cat(parts, dim=-1)), ATTENTION_SLOPE)
        logits = self.att_outer(hidden).squeeze(-1)
        return segment_softmax(logits, graph.dst, entities.shape[0])

    def message_pass(self, entities, relations, graph: GraphTensors, theta):
        out = self.w_self(entities)
        if len(graph):
            msg = self.w_msg(self.compose(entities[graph.src] + relations[graph.rel]))
            out = out.index_add(0, graph.dst, theta.unsqueeze(-1) * msg)
        return self.drop(self.act(out))

    def forward(self, entities, relations, graph: GraphTensors, time_features=None):
        theta = None
        if len(graph):
            theta = self.attention(entities, relations, graph, time_features)
        return self.message_pass(entities, relations, graph, theta)


class ViewEncoder(nn.Module):
    def __init__(self, dim: int, num_layers: int, use_time: bool, kernels: int = 2,
                 dropout: float = 0.2):
        super().__init__()
        self.time_encoder = TimeEncoder(dim) if use_time else None
        self.layers = nn.ModuleList(
            ViewAttentionLayer(dim, use_time, kernels, dropout) for _ in range(num_layers))

    def forward(self, entities, relations, graph: GraphTensors):
        time_features = None
        if self.time_encoder is not None and len(graph):
            time_features = self.time_encoder(graph.delta_t)
        for layer in self.layers:
            entities = layer(entities, relations, graph, time_features)
        return entities


@dataclass
class ViewEmbeddings:
    view: str
    entities: torch.Tensor
    relations: torch.Tensor


class DualViewEncoder(nn.Module):
    """Independent decomposers and encoders for the evidence (E) and dynamics (D) views."""

    def __init__(self, dim: int, evidence_layers: int, dynamics_layers: int, kernels: int = 2,
                 dropout: float = 0.2):
        super().__init__()
        self.decomposers = nn.ModuleDict({
            EVIDENCE: RelationDecomposer(dim, dropout),
            DYNAMICS: RelationDecomposer(dim, dropout),
        })
        self.encoders = nn.ModuleDict({
            EVIDENCE: ViewEncoder(dim, evidence_layers, False, kernels, dropout),
            DYNAMICS: ViewEncoder(dim, dynamics_layers, True, kernels, dropout),
        })

    def decompose(self, relations, view: str, enabled: bool = True):
        return self.decomposers[view](relations) if enabled else relations

    def encode_view(self, state: EmbeddingState, graph: GraphTensors, view: str,
                    use_red: bool = True) -> ViewEmbeddings:
        relations = self.decompose(state.relations, view, use_red)
        entities = self.encoders[view](state.entities, relations, graph)
        return ViewEmbeddings(view, entities, relations)

    def forward(self, state: EmbeddingState, evidence: GraphTensors | None,
                dynamics: GraphTensors | None, use_red: bool = True):
        """Encode whichever views are given; a ``None`` graph skips that view."""
        out = {}
        if evidence is not None:
            out[EVIDENCE] = self.encode_view(state, evidence, EVIDENCE, use_red)
        if dynamics is not None:
            out[DYNAMICS] = self.encode_view(state, dynamics, DYNAMICS, use_red)
        return out
