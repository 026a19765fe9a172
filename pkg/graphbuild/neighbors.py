"""
Exact Nearest Neighbours

Cosine distances in feature space, k-nearest and k-reciprocal nearest
neighbour sets, and the spatial k-NN graph over tile coordinates.
Ties are always broken by the smaller node index.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Set, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.metrics.pairwise import cosine_distances

from .models import GraphKind, NeighborCountError, SparseGraph, ZeroVectorError


def cosine_distance(f_i: np.ndarray, f_j: np.ndarray) -> float:
    """
    Cosine distance 1 - cos(f_i, f_j), in [0, 2].

    Raises:
        ZeroVectorError if either vector is all zeros
    """
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    norm_i, norm_j = np.linalg.norm(f_i), np.linalg.norm(f_j)
    if norm_i == 0 or norm_j == 0:
        raise ZeroVectorError("cosine distance of a zero vector is undefined")
    return float(np.clip(1.0 - f_i @ f_j / (norm_i * norm_j), 0.0, 2.0))


def pairwise_cosine_distance(features: np.ndarray) -> np.ndarray:
    """
    (N, N) cosine distance matrix.

    Raises:
        ZeroVectorError if any row is all zeros
    """
    features = np.asarray(features, dtype=np.float64)
    zero_rows = np.flatnonzero(~features.any(axis=1))
    if zero_rows.size:
        raise ZeroVectorError(f"zero feature vector at patch {int(zero_rows[0])}")
    return np.clip(cosine_distances(features), 0.0, 2.0)


def knn(distances: np.ndarray, k: int) -> List[np.ndarray]:
    """
    k nearest neighbours of every node, self excluded.

    Args:
        distances: (N, N) distance matrix
        k: Neighbours per node

    Returns:
        One index array per node, nearest first

    Raises:
        NeighborCountError if k >= N or k < 1
    """
    distances = np.asarray(distances, dtype=np.float64)
    n = distances.shape[0]
    if not 1 <= k < n:
        raise NeighborCountError(f"k={k} needs 1 <= k < n={n}")
    masked = distances.copy()
    np.fill_diagonal(masked, np.inf)
    # stable sort keeps equal distances in index order
    order = np.argsort(masked, axis=1, kind="stable")
    return [order[i, :k] for i in range(n)]


def reciprocal_knn(neighbors: Sequence[np.ndarray]) -> List[Set[int]]:
    """r_i(k) = {j in N_k(i) : i in N_k(j)}."""
    sets = [set(int(j) for j in row) for row in neighbors]
    return [{j for j in sets[i] if i in sets[j]} for i in range(len(sets))]


def spatial_knn(coords: np.ndarray, k_spatial: int = 8) -> SparseGraph:
    """
    Unweighted spatial graph: each patch joined to its k Euclidean-nearest
    patches on the tile grid, symmetrised by union.

    k is clamped to N - 1; bags with fewer than two patches get no edges.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    n = coords.shape[0]
    if n < 2:
        return SparseGraph.empty(n, GraphKind.SPATIAL)
    neighbors = knn(cdist(coords, coords), min(k_spatial, n - 1))
    pairs = {(min(i, int(j)), max(i, int(j))): 1.0 for i, row in enumerate(neighbors) for j in row}
    return undirected_graph(n, pairs, GraphKind.SPATIAL)


def undirected_graph(n: int, weighted: Dict[Tuple[int, int], float], kind: GraphKind) -> SparseGraph:
    """SparseGraph holding both directions of every (i, j) -> weight entry."""
    if not weighted:
        return SparseGraph.empty(n, kind)
    pairs = sorted(weighted)
    i, j = np.array(pairs, dtype=np.int64).T
    w = np.array([weighted[p] for p in pairs], dtype=np.float64)
    return SparseGraph(n, np.concatenate([i, j]), np.concatenate([j, i]), np.concatenate([w, w]), kind)
