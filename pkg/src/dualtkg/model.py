"""Full dual-view model: initialization, view encoders, decoders and projections."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import TrainConfig
from .encoders import DualViewEncoder, GraphTensors, ViewEmbeddings
from .initialization import EmbeddingState, SnapshotTensors, SpatioTemporalInit
from .scoring import ConvTransE, QueryProjector, fuse_scores, info_nce
from .views import DYNAMICS, EVIDENCE, ViewGraph


@dataclass
class SideOutput:
    """Forward result for one query direction."""

    views: dict  # view tag -> ViewEmbeddings
    scores: dict  # view tag -> (q, |E|) scores
    fused: torch.Tensor


class DualViewModel(nn.Module):
    def __init__(self, num_entities: int, num_base_relations: int, config: TrainConfig):
        super().__init__()
        self.num_entities = num_entities
        self.num_base_relations = num_base_relations
        self.config = config
        d = config.embedding_dim
        self.init_encoder = SpatioTemporalInit(
            num_entities, 2 * num_base_relations, d, config.gcn_layers,
            config.composition_kernels, config.dropout)
        self.view_encoder = DualViewEncoder(
            d, config.gat_layers, config.gat_layers, config.composition_kernels, config.dropout)
        self.decoders = nn.ModuleDict({
            EVIDENCE: ConvTransE(d, config.decoder_kernels, dropout=config.dropout),
            DYNAMICS: ConvTransE(d, config.decoder_kernels, dropout=config.dropout),
        })
        self.relation_decoder = ConvTransE(d, config.decoder_kernels, dropout=config.dropout)
        self.projectors = nn.ModuleDict({
            EVIDENCE: QueryProjector(d, config.dropout),
            DYNAMICS: QueryProjector(d, config.dropout),
        })

    @property
    def device(self):
        return self.init_encoder.entity_embedding.device

    @property
    def active_views(self):
        views = []
        if self.config.use_evidence:
            views.append(EVIDENCE)
        if self.config.use_dynamics:
            views.append(DYNAMICS)
        return views

    def initial_state(self, history, t_q: int, entity_noise=None) -> EmbeddingState:
        snaps = [h if isinstance(h, SnapshotTensors)
                 else SnapshotTensors.from_facts(h.timestamp, h.facts, self.device) for h in history]
        return self.init_encoder(snaps, t_q, entity_noise)

    def _graph(self, graph: ViewGraph | GraphTensors, view: str):
        if view not in self.active_views:
            return None
        if isinstance(graph, GraphTensors):
            return graph
        return GraphTensors.from_view(graph, self.num_entities, self.device)

    def side_forward(self, state: EmbeddingState, graphs, keys) -> SideOutput:
        """``graphs`` is ``(evidence_graph, dynamics_graph)``; ``keys`` is ``(q, 2)`` subject/relation."""
        keys = torch.as_tensor(keys, dtype=torch.long, device=self.device).reshape(-1, 2)
        evidence, dynamics = graphs
        views = self.view_encoder(state, self._graph(evidence, EVIDENCE),
                                  self._graph(dynamics, DYNAMICS), self.config.use_red)
        subj, rel = keys[:, 0], keys[:, 1]
        scores = {}
        for tag, emb in views.items():
            scores[tag] = self.decoders[tag].score(emb.entities[subj], emb.relations[rel], emb.entities)
        return SideOutput(views, scores, fuse_scores(*scores.values()))

    def query_vectors(self, emb: ViewEmbeddings, keys):
        return self.projectors[emb.view](emb.entities[keys[:, 0]], emb.relations[keys[:, 1]])

    def contrastive(self, out: SideOutput, keys) -> torch.Tensor:
        keys = torch.as_tensor(keys, dtype=torch.long, device=self.device).reshape(-1, 2)
        if EVIDENCE not in out.views or DYNAMICS not in out.views:
            return out.fused.new_zeros(())
        z_d = self.query_vectors(out.views[DYNAMICS], keys)
        z_e = self.query_vectors(out.views[EVIDENCE], keys)
        return info_nce(z_d, z_e, self.config.temperature)

    def relation_scores(self, out: SideOutput, state: EmbeddingState, pairs) -> torch.Tensor:
        """Scores over all (base and inverse) relations for ``(subject, object)`` pairs."""
        pairs = torch.as_tensor(pairs, dtype=torch.long, device=self.device).reshape(-1, 2)
        entities = sum(emb.entities for emb in out.views.values())
        return self.relation_decoder.score(entities[pairs[:, 0]], entities[pairs[:, 1]],
                                           state.relations)
