"""
Graph Construction Package

Builds the two graphs of every bag: a latent graph refined by personalised
PageRank diffusion and a spatial k-nearest-neighbour graph over tile
coordinates.
"""

from .models import (
    DiffusionConfig,
    GraphCacheError,
    GraphError,
    GraphKind,
    NeighborCountError,
    SparseGraph,
    StochasticityError,
    WeightMode,
    ZeroVectorError,
)
from .neighbors import cosine_distance, knn, pairwise_cosine_distance, reciprocal_knn, spatial_knn
from .diffusion import ppr_diffuse, sparsify, transition_matrix
from .hybrid import (
    HybridGraph,
    build_graph_cache,
    build_hybrid_graph,
    cache_path,
    latent_adjacency,
    load_graph,
    read_graph_cache,
    write_graph_cache,
)

__all__ = [
    "DiffusionConfig",
    "GraphCacheError",
    "GraphError",
    "GraphKind",
    "NeighborCountError",
    "SparseGraph",
    "StochasticityError",
    "WeightMode",
    "ZeroVectorError",
    "cosine_distance",
    "knn",
    "pairwise_cosine_distance",
    "reciprocal_knn",
    "spatial_knn",
    "ppr_diffuse",
    "sparsify",
    "transition_matrix",
    "HybridGraph",
    "build_graph_cache",
    "build_hybrid_graph",
    "cache_path",
    "latent_adjacency",
    "load_graph",
    "read_graph_cache",
    "write_graph_cache",
]
