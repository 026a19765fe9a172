"""
Att-GNN Building Blocks

Single-head dot-product attention message passing over one graph, the
residual fusion of latent and spatial messages, and the diversity penalty
between the two graphs' attention matrices.

Edges are given as a (2, E) index tensor of (neighbour j, target i); the
message flows j -> i and is normalised over the neighbours of i.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor
from torch_geometric.utils import scatter, softmax

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5


class ProjectionMLP(nn.Module):
    """f (d_f) -> Linear -> ReLU -> Dropout -> Linear -> h0 (d_h)."""

    def __init__(self, feature_dim: int, hidden_dim: int, dropout: float = 0.5):
        super().__init__()
        self.feature_dim = feature_dim
        self.net = nn.Sequential(
            nn.Linear(feature_dim, hidden_dim),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden_dim, hidden_dim),
        )

    def forward(self, features: Tensor) -> Tensor:
        if features.shape[-1] != self.feature_dim:
            raise ValueError(f"expected {self.feature_dim}-dim features, got {features.shape[-1]}")
        return self.net(features)


def _square(d: int) -> nn.Parameter:
    weight = torch.empty(d, d)
    nn.init.xavier_uniform_(weight)
    return nn.Parameter(weight)


def edge_logits(h: Tensor, edge_index: Tensor, w_k: Tensor, w_q: Tensor, w_att: Tensor) -> Tensor:
    """
    Attention logit per directed edge (i <- j):
    (h_i W_k) W_att (h_j W_q)^T / sqrt(d_h).
    """
    src, dst = edge_index
    keys = (h @ w_k)[dst]
    queries = (h @ w_q)[src]
    return ((keys @ w_att) * queries).sum(dim=-1) / math.sqrt(h.shape[-1])


def neighbor_softmax(logits: Tensor, edge_index: Tensor, num_nodes: int) -> Tensor:
    """Softmax of edge logits over the incoming edges of each target node."""
    return softmax(logits, edge_index[1], num_nodes=num_nodes)


def gconv(
    h: Tensor, edge_index: Tensor, w_k: Tensor, w_q: Tensor, w_att: Tensor, w_v: Tensor
) -> Tuple[Tensor, Tensor]:
    """
    Attention-weighted sum of neighbour values m_i = sum_j beta_ij h_j W_v.

    Returns:
        (messages (N, d_h), beta per edge); isolated nodes get a zero message
    """
    n = h.shape[0]
    if edge_index.numel() == 0:
        return torch.zeros_like(h), h.new_zeros(0)
    beta = neighbor_softmax(edge_logits(h, edge_index, w_k, w_q, w_att), edge_index, n)
    values = (h @ w_v)[edge_index[0]]
    messages = scatter(beta.unsqueeze(-1) * values, edge_index[1], dim=0, dim_size=n, reduce="sum")
    return messages, beta


def fuse(h0: Tensor, messages: Sequence[Tensor], norm: nn.LayerNorm, scale: float = 1.0) -> Tensor:
    """h1 = h0 + ReLU(LayerNorm(scale * sum of messages))."""
    if not messages:
        return h0
    total = torch.stack(list(messages)).sum(dim=0) * scale
    return h0 + F.relu(norm(total))


def diversity_loss(w_lat: Tensor, w_spa: Tensor, mode: str = "decorrelate") -> Tuple[Tensor, bool]:
    """
    Penalty on the similarity of the two graphs' attention matrices.

    Args:
        mode: "decorrelate" gives cos^2 of the flattened matrices;
            "literal" gives 1 - cos

    Returns:
        (loss, degenerate); a zero matrix yields loss 0 and degenerate=True
    """
    if w_lat.shape != w_spa.shape:
        raise ValueError(f"attention matrices differ in shape: {tuple(w_lat.shape)} vs {tuple(w_spa.shape)}")
    a, b = w_lat.flatten(), w_spa.flatten()
    norm_a, norm_b = a.norm(), b.norm()
    if norm_a.item() == 0.0 or norm_b.item() == 0.0:
        logger.warning("diversity loss on a zero attention matrix; returning 0")
        return (a * 0.0).sum() + (b * 0.0).sum(), True
    cos = (a @ b) / (norm_a * norm_b)
    if mode == "decorrelate":
        return cos ** 2, False
    if mode == "literal":
        return 1.0 - cos, False
    raise ValueError(f"unknown diversity mode {mode!r}")


class AttGNNLayer(nn.Module):
    """
    One message-passing layer over any subset of the latent and spatial graphs.

    W_k and W_v are shared by both graphs; each graph has its own W_q and W_att.
    """

    def __init__(self, hidden_dim: int, graph_types: Sequence[str], fuse_scale: float = 1.0):
        super().__init__()
        self.graph_types = tuple(graph_types)
        self.fuse_scale = fuse_scale
        self.w_k = _square(hidden_dim)
        self.w_v = _square(hidden_dim)
        self.w_q = nn.ParameterDict({t: _square(hidden_dim) for t in self.graph_types})
        self.w_att = nn.ParameterDict({t: _square(hidden_dim) for t in self.graph_types})
        self.norm = nn.LayerNorm(hidden_dim, eps=LAYER_NORM_EPS)

    def forward(self, h: Tensor, graphs: dict) -> Tuple[Tensor, dict]:
        """
        Args:
            h: (N, d_h) node features
            graphs: graph type -> (2, E) edge index

        Returns:
            (h1, graph type -> beta per edge)
        """
        messages, betas = [], {}
        for t in self.graph_types:
            m, beta = gconv(h, graphs[t], self.w_k, self.w_q[t], self.w_att[t], self.w_v)
            messages.append(m)
            betas[t] = beta
        return fuse(h, messages, self.norm, self.fuse_scale), betas

    def diversity(self, mode: str = "decorrelate") -> Tuple[Tensor, bool]:
        if set(self.graph_types) != {"latent", "spatial"}:
            return self.w_k.new_zeros(()), False
        return diversity_loss(self.w_att["latent"], self.w_att["spatial"], mode)
