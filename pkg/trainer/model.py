"""
RACR-MIL Model

Att-GNN encoder followed by the attention MIL head. One forward call
processes one bag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import torch
import torch.nn as nn
from torch import Tensor

from attgnn import AttGNN
from milhead import ClassifierKind, HeadOutput, MilHead, PrototypeMode

from .config import TrainConfig


@dataclass
class BagForward:
    """Everything a forward pass produces for one bag."""
    h0: Tensor
    h1: Tensor
    head: HeadOutput
    edge_attention: List[Dict[str, Tensor]]

    @property
    def attention(self) -> Tensor:
        return self.head.attention

    @property
    def scores(self) -> Tensor:
        return self.head.scores

    @property
    def likelihood(self) -> Tensor:
        return self.head.likelihood

    @property
    def probabilities(self) -> Tensor:
        """Bag class probabilities, softmax of the likelihood."""
        return torch.softmax(self.head.likelihood, dim=-1)


class RacrMil(nn.Module):
    def __init__(self, feature_dim: int, cfg: TrainConfig):
        super().__init__()
        self.feature_dim = feature_dim
        self.gnn = AttGNN(
            feature_dim,
            cfg.hidden_dim,
            cfg.graph_mode_enum,
            num_layers=cfg.num_layers,
            dropout=cfg.dropout,
            fuse_scale=cfg.fuse_scale,
        )
        self.head = MilHead(
            cfg.hidden_dim,
            cfg.num_classes,
            tau=cfg.tau,
            classifier=ClassifierKind(cfg.classifier),
            prototype_mode=PrototypeMode(cfg.prototype_mode),
        )

    def forward(self, features: Tensor, graphs: Dict[str, Tensor]) -> BagForward:
        h0, h1, edge_attention = self.gnn(features, graphs)
        return BagForward(h0, h1, self.head(h1), edge_attention)


def build_model(feature_dim: int, cfg: TrainConfig, seed: Optional[int] = None) -> RacrMil:
    """Model with parameters drawn from torch's generator seeded with cfg.seed (or seed)."""
    torch.manual_seed(cfg.seed if seed is None else seed)
    return RacrMil(feature_dim, cfg)
