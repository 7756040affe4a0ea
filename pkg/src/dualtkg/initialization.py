"""Spatio-temporal initialization from the most recent snapshots.

Each of the last ``L`` snapshots before the query time is processed in order:
entity states are concatenated with a cosine encoding of their age and
projected, passed through relational GCN layers on that snapshot, and folded
into the running state with GRU cells (one for entities, one for relations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .layers import ConvComposition, uniform_embedding

RRELU_LOWER = 1.0 / 8.0
RRELU_UPPER = 1.0 / 3.0


@dataclass
class EmbeddingState:
    entities: torch.Tensor  # (|E|, d)
    relations: torch.Tensor  # (2|R|, d)


@dataclass(frozen=True)
class SnapshotTensors:
    timestamp: int
    src: torch.Tensor
    rel: torch.Tensor
    dst: torch.Tensor

    @classmethod
    def from_facts(cls, timestamp, facts, device=None):
        facts = torch.as_tensor(np.array(facts, dtype=np.int64), device=device).reshape(-1, 4)
        return cls(int(timestamp), facts[:, 0], facts[:, 1], facts[:, 2])

    def __len__(self):
        return len(self.src)


class TemporalProjection(nn.Module):
    """``W0 [e || cos(w * tau + b)]`` with element-wise cosine features."""

    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(dim).uniform_(-1.0, 1.0))
        self.bias = nn.Parameter(torch.zeros(dim))
        self.proj = nn.Linear(2 * dim, dim, bias=False)
        with torch.no_grad():
            self.proj.weight.copy_(torch.cat([torch.eye(dim), torch.zeros(dim, dim)], dim=1))
            self.proj.weight[:, dim:].normal_(0.0, 0.1 / dim ** 0.5)

    def encode(self, tau) -> torch.Tensor:
        tau = torch.as_tensor(tau, dtype=self.weight.dtype, device=self.weight.device)
        if torch.any(tau < 0):
            raise ValueError("relative time must be non-negative")
        return torch.cos(self.weight * tau.unsqueeze(-1) + self.bias)

    def forward(self, entities: torch.Tensor, tau) -> torch.Tensor:
        phi = self.encode(tau)
        if phi.dim() == 1:
            phi = phi.expand_as(entities)
        return self.proj(torch.cat([entities, phi], dim=-1))


class SnapshotGCNLayer(nn.Module):
    """``e_o' = rrelu(sum_{(s,r,o)} W1 kappa(e_s, r) / c_o + W2 e_o)``.

    Relation embeddings are carried through the same layer by a linear map.
    """

    def __init__(self, dim: int, kernels: int = 2, dropout: float = 0.2):
        super().__init__()
        self.compose = ConvComposition(2, dim, kernels)
        self.w_msg = nn.Linear(dim, dim, bias=False)
        self.w_self = nn.Linear(dim, dim, bias=False)
        self.w_rel = nn.Linear(dim, dim, bias=False)
        self.act = nn.RReLU(RRELU_LOWER, RRELU_UPPER)
        self.drop = nn.Dropout(dropout)

    def forward(self, entities, relations, src, rel, dst):
        if entities.shape[-1] != relations.shape[-1]:
            raise ValueError("entity and relation dimensions differ")
        out = self.w_self(entities)
        if len(src):
            msg = self.w_msg(self.compose(entities[src], relations[rel]))
            in_degree = torch.bincount(dst, minlength=entities.shape[0]).to(entities.dtype)
            msg = msg / in_degree[dst].unsqueeze(-1)
            out = out.index_add(0, dst, msg)
        return self.drop(self.act(out)), self.w_rel(relations)


def relation_mean_pool(entities, src, rel, dst, num_relations):
    """Mean of the embeddings of entities adjacent to each relation (zero when absent)."""
    pooled = entities.new_zeros(num_relations, entities.shape[-1])
    if len(src) == 0:
        return pooled
    n = entities.shape[0]
    pairs = torch.cat([rel * n + src, rel * n + dst]).unique()
    rel_of, ent_of = pairs // n, pairs % n
    pooled = pooled.index_add(0, rel_of, entities[ent_of])
    counts = torch.bincount(rel_of, minlength=num_relations).to(entities.dtype).clamp_min(1)
    return pooled / counts.unsqueeze(-1)


class SpatioTemporalInit(nn.Module):
    def __init__(self, num_entities: int, num_relations: int, dim: int, num_layers: int = 2,
                 kernels: int = 2, dropout: float = 0.2):
        """``num_relations`` counts inverse relations too."""
        super().__init__()
        self.num_entities = num_entities
        self.num_relations = num_relations
        self.entity_embedding = uniform_embedding(num_entities, dim)
        self.relation_embedding = uniform_embedding(num_relations, dim)
        self.projection = TemporalProjection(dim)
        self.layers = nn.ModuleList(SnapshotGCNLayer(dim, kernels, dropout) for _ in range(num_layers))
        self.gru_entity = nn.GRUCell(dim, dim)
        self.gru_relation = nn.GRUCell(2 * dim, dim)

    def gcn(self, entities, relations, snap: SnapshotTensors):
        for layer in self.layers:
            entities, relations = layer(entities, relations, snap.src, snap.rel, snap.dst)
        return entities

    def step(self, state: EmbeddingState, snap: SnapshotTensors, tau) -> EmbeddingState:
        projected = self.projection(state.entities, tau)
        gcn_out = self.gcn(projected, state.relations, snap)
        return self.recurrent_update(state, gcn_out, snap)

    def recurrent_update(self, state: EmbeddingState, gcn_out, snap: SnapshotTensors):
        entities = self.gru_entity(gcn_out, state.entities)
        pooled = relation_mean_pool(state.entities, snap.src, snap.rel, snap.dst, self.num_relations)
        rel_input = torch.cat([pooled, self.relation_embedding], dim=-1)
        relations = self.gru_relation(rel_input, state.relations)
        return EmbeddingState(entities, relations)

    def base_state(self, entity_noise: torch.Tensor | None = None) -> EmbeddingState:
        entities = self.entity_embedding
        if entity_noise is not None:
            entities = entities + entity_noise
        return EmbeddingState(entities, self.relation_embedding)

    def forward(self, history: list, t_q: int, entity_noise=None) -> EmbeddingState:
        """Run over ``history`` (chronological :class:`SnapshotTensors`, all before ``t_q``)."""
        state = self.base_state(entity_noise)
        for snap in history:
            state = self.step(state, snap, t_q - snap.timestamp)
        return state
