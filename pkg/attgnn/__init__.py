"""
Att-GNN Package

Feature projection and single-head attention message passing over the
latent and spatial graphs, plus the shared checkpoint format.
"""

from .layers import (
    AttGNNLayer,
    ProjectionMLP,
    diversity_loss,
    edge_logits,
    fuse,
    gconv,
    neighbor_softmax,
)
from .network import AttGNN, GraphMode, graph_tensors
from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint_metadata, save_checkpoint

__all__ = [
    "AttGNNLayer",
    "ProjectionMLP",
    "diversity_loss",
    "edge_logits",
    "fuse",
    "gconv",
    "neighbor_softmax",
    "AttGNN",
    "GraphMode",
    "graph_tensors",
    "CheckpointError",
    "load_checkpoint",
    "read_checkpoint_metadata",
    "save_checkpoint",
]
