"""
Latent Graph Figure

Draws a bag's latent graph before and after diffusion at patch coordinates,
keeping only edges whose endpoints have cosine similarity >= min_similarity.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import networkx as nx
import numpy as np

from bagio import Bag

from .hybrid import HybridGraph
from .models import SparseGraph
from .neighbors import pairwise_cosine_distance

logger = logging.getLogger(__name__)


def to_networkx(graph: SparseGraph, similarity: Optional[np.ndarray] = None, min_similarity: float = 0.0) -> nx.Graph:
    """Undirected networkx graph; edges below min_similarity are left out when a similarity matrix is given."""
    g = nx.Graph()
    g.add_nodes_from(range(graph.n))
    for i, j, w in graph.edges():
        if i > j:
            continue
        if similarity is not None and similarity[i, j] < min_similarity:
            continue
        g.add_edge(i, j, weight=w)
    return g


def draw_latent_refinement(bag: Bag, graph: HybridGraph, save_path: Path, min_similarity: float = 0.5) -> Path:
    """
    Save a two-panel PNG: reciprocal k-NN graph (left) and the diffused,
    sparsified latent graph (right).
    """
    if graph.initial is None:
        raise ValueError("graph has no pre-diffusion latent graph; rebuild it with build_hybrid_graph")
    similarity = 1.0 - pairwise_cosine_distance(bag.features)
    pos = {i: (float(t), -float(s)) for i, (s, t) in enumerate(bag.coords)}

    fig, axes = plt.subplots(1, 2, figsize=(14, 7))
    panels = [("Reciprocal k-NN graph", graph.initial), ("After diffusion and sparsification", graph.latent)]
    for ax, (title, sparse) in zip(axes, panels):
        g = to_networkx(sparse, similarity, min_similarity)
        nx.draw(g, pos, ax=ax, node_size=40, node_color="lightblue", edge_color="gray", width=0.8)
        ax.set_title(f"{title}\n{g.number_of_edges()} edges with cosine similarity >= {min_similarity}",
                     fontsize=11, fontweight="bold")
        ax.axis("off")
    fig.suptitle(f"Latent graph of {bag.bag_id}", fontsize=14, fontweight="bold")
    fig.tight_layout()

    save_path = Path(save_path)
    save_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(save_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.info("Latent graph figure saved to %s", save_path)
    return save_path
