"""
Att-GNN Network

Projects patch features to h0 and runs the attention layers over whichever
graphs the graph mode selects. Mode NONE skips message passing entirely and
leaves h1 = h0 (the plain attention-MIL baseline).
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional, Tuple

import torch
import torch.nn as nn
from torch import Tensor

from graphbuild import HybridGraph

from .layers import AttGNNLayer, ProjectionMLP


class GraphMode(Enum):
    DUAL = "dual"
    LATENT = "latent"
    SPATIAL = "spatial"
    NONE = "none"

    @property
    def graph_types(self) -> Tuple[str, ...]:
        return {
            GraphMode.DUAL: ("latent", "spatial"),
            GraphMode.LATENT: ("latent",),
            GraphMode.SPATIAL: ("spatial",),
            GraphMode.NONE: (),
        }[self]

    def __str__(self):
        return self.value


def graph_tensors(graph: Optional[HybridGraph], device=None) -> Dict[str, Tensor]:
    """Edge index tensors of a bag's graphs keyed by graph type."""
    if graph is None:
        return {}
    return {
        sparse.kind.value: torch.as_tensor(sparse.edge_index(), dtype=torch.long, device=device)
        for sparse in graph
    }


class AttGNN(nn.Module):
    """
    Projection MLP followed by `num_layers` Att-GNN layers.

    Args:
        feature_dim: d_f of the input patch features
        hidden_dim: d_h
        graph_mode: Which graphs carry messages
        num_layers: Stacked attention layers
        dropout: Dropout inside the projection MLP
        fuse_scale: Multiplier on the summed messages (0.5 averages them)
    """

    def __init__(
        self,
        feature_dim: int,
        hidden_dim: int = 64,
        graph_mode: GraphMode = GraphMode.DUAL,
        num_layers: int = 1,
        dropout: float = 0.5,
        fuse_scale: float = 1.0,
    ):
        super().__init__()
        self.graph_mode = graph_mode
        self.project = ProjectionMLP(feature_dim, hidden_dim, dropout)
        self.layers = nn.ModuleList(
            [AttGNNLayer(hidden_dim, graph_mode.graph_types, fuse_scale) for _ in range(num_layers)]
            if graph_mode is not GraphMode.NONE else []
        )

    def forward(self, features: Tensor, graphs: Dict[str, Tensor]) -> Tuple[Tensor, Tensor, List[dict]]:
        """
        Returns:
            (h0, h1, per-layer attention over edges)
        """
        h0 = self.project(features)
        h = h0
        betas = []
        for layer in self.layers:
            h, beta = layer(h, graphs)
            betas.append(beta)
        return h0, h, betas

    def diversity(self, mode: str = "decorrelate") -> Tuple[Tensor, bool]:
        """Diversity penalty summed over layers; degenerate if any layer is."""
        total = self.project.net[0].weight.new_zeros(())
        degenerate = False
        for layer in self.layers:
            loss, flag = layer.diversity(mode)
            total = total + loss
            degenerate = degenerate or flag
        return total, degenerate
