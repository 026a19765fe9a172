"""
Graph Data Models

- GraphKind: latent or spatial
- SparseGraph: symmetric weighted edge list without self-loops
- DiffusionConfig: graph construction and diffusion settings
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Tuple

import numpy as np


class GraphError(ValueError):
    """Base class for graph construction problems."""


class NeighborCountError(GraphError):
    """k nearest neighbours requested from a set with k or fewer points."""


class ZeroVectorError(GraphError):
    """Cosine distance is undefined for a zero feature vector."""


class StochasticityError(GraphError):
    """Adjacency cannot be normalised into a column-stochastic matrix."""


class GraphCacheError(GraphError):
    """A graph cache file is missing or malformed."""


class GraphKind(Enum):
    LATENT = "latent"
    SPATIAL = "spatial"

    def __str__(self):
        return self.value


class WeightMode(Enum):
    """Edge weight fed to diffusion: cosine similarity (default) or literal distance."""
    SIMILARITY = "similarity"
    DISTANCE = "distance"


@dataclass
class SparseGraph:
    """
    Undirected weighted graph stored as directed edge arrays.

    Every undirected edge {i, j} appears twice, as (i, j) and (j, i), with
    the same weight. Edges are sorted by source node, then by weight
    descending, then by target index.

    Attributes:
        n: Node count
        src: (E,) source node per directed edge
        dst: (E,) target node per directed edge
        weight: (E,) non-negative finite weights
        kind: Which graph this is
    """
    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    kind: GraphKind

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        order = np.lexsort((self.dst, -self.weight, self.src))
        self.src, self.dst, self.weight = self.src[order], self.dst[order], self.weight[order]
        self._check()

    def _check(self):
        if not (self.src.shape == self.dst.shape == self.weight.shape):
            raise GraphError("edge arrays must have equal length")
        if self.src.size:
            if self.src.min() < 0 or self.dst.min() < 0 or max(self.src.max(), self.dst.max()) >= self.n:
                raise GraphError("edge endpoint outside [0, n)")
            if np.any(self.src == self.dst):
                raise GraphError("self-loops are not stored")
            if not np.all(np.isfinite(self.weight)) or np.any(self.weight < 0):
                raise GraphError("edge weights must be finite and non-negative")

    @classmethod
    def empty(cls, n: int, kind: GraphKind) -> "SparseGraph":
        return cls(n, np.zeros(0), np.zeros(0), np.zeros(0), kind)

    @classmethod
    def from_dense(cls, matrix: np.ndarray, kind: GraphKind) -> "SparseGraph":
        """Graph from a symmetric matrix; the diagonal and zero entries are ignored."""
        matrix = np.asarray(matrix, dtype=np.float64)
        off = matrix.copy()
        np.fill_diagonal(off, 0.0)
        src, dst = np.nonzero(off)
        return cls(matrix.shape[0], src, dst, off[src, dst], kind)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        dense[self.src, self.dst] = self.weight
        return dense

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return int(self.src.size // 2)

    def neighbors(self, i: int) -> np.ndarray:
        return self.dst[self.src == i]

    def edge_set(self) -> set:
        """Undirected edges as (min, max) pairs."""
        return {(int(min(a, b)), int(max(a, b))) for a, b in zip(self.src, self.dst)}

    def edges(self) -> Iterator[Tuple[int, int, float]]:
        for i, j, w in zip(self.src, self.dst, self.weight):
            yield int(i), int(j), float(w)

    def edge_index(self) -> np.ndarray:
        """(2, E) array of (neighbour j, target i), the message direction j -> i."""
        return np.stack([self.dst, self.src])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseGraph):
            return False
        return (
            self.n == other.n
            and self.kind == other.kind
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weight, other.weight)
        )


@dataclass(frozen=True)
class DiffusionConfig:
    """
    Hybrid graph settings.

    Attributes:
        alpha: Restart probability of personalised PageRank
        truncation_tol: Series stops once alpha (1 - alpha)^k drops below this
        top_m: Neighbours kept per node after diffusion
        delta: Diffused weights must exceed this to survive
        k_latent: Neighbour count of the initial latent kNN graph
        k_spatial: Neighbour count of the spatial graph
        weight_mode: Latent edge weights from cosine similarity or distance
        closed_form_max_n: Largest bag solved in closed form; bigger bags use the series
    """
    alpha: float = 0.25
    truncation_tol: float = 1e-6
    top_m: int = 5
    delta: float = 0.02
    k_latent: int = 8
    k_spatial: int = 8
    weight_mode: WeightMode = WeightMode.SIMILARITY
    closed_form_max_n: int = 512

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise GraphError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.delta < 0:
            raise GraphError("delta must be non-negative")
        if min(self.k_latent, self.k_spatial, self.top_m) < 1:
            raise GraphError("k_latent, k_spatial and top_m must be at least 1")
        if self.truncation_tol <= 0:
            raise GraphError("truncation_tol must be positive")

    def theta(self, k: int) -> float:
        """Diffusion coefficient alpha (1 - alpha)^k."""
        return self.alpha * (1.0 - self.alpha) ** k
