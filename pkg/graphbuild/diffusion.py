"""
Personalised PageRank Diffusion

Refines the reciprocal k-NN latent graph: the adjacency is normalised into a
column-stochastic transition matrix T, diffused as sum_k theta_k T^k and then
sparsified back to a few strong neighbours per node.
"""

from __future__ import annotations

import logging
from typing import Dict, Tuple, Union

import numpy as np
from scipy import linalg

from .models import DiffusionConfig, GraphKind, SparseGraph, StochasticityError
from .neighbors import undirected_graph

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-9


def transition_matrix(adjacency: Union[SparseGraph, np.ndarray]) -> np.ndarray:
    """
    T = A D^-1 with D_jj the j-th column sum.

    Columns that sum to zero (isolated nodes) receive a unit self-loop, so
    the walk stays put there.

    Raises:
        StochasticityError for negative or non-finite weights
    """
    a = adjacency.to_dense() if isinstance(adjacency, SparseGraph) else np.array(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StochasticityError(f"adjacency must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise StochasticityError("adjacency weights must be finite and non-negative")
    col = a.sum(axis=0)
    isolated = np.flatnonzero(col == 0)
    if isolated.size:
        a[isolated, isolated] = 1.0
        col[isolated] = 1.0
        logger.debug("%d isolated nodes given self-loops", isolated.size)
    t = a / col
    if not np.allclose(t.sum(axis=0), 1.0, atol=STOCHASTIC_TOL, rtol=0.0):
        raise StochasticityError("transition matrix columns do not sum to 1")
    return t


def ppr_diffuse(
    adjacency: Union[SparseGraph, np.ndarray],
    cfg: DiffusionConfig = DiffusionConfig(),
    method: str = "auto",
) -> np.ndarray:
    """
    Diffusion matrix sum_{k>=0} alpha (1 - alpha)^k T^k.

    Args:
        adjacency: Latent graph, dense or sparse; diagonal entries allowed
        cfg: alpha, truncation tolerance and the closed-form size limit
        method: "series" (stop once theta_k < truncation_tol and close
            with the tail term (1 - alpha)^k T^k), "closed"
            (alpha (I - (1 - alpha) T)^-1) or "auto" (closed form up to
            cfg.closed_form_max_n nodes)

    Returns:
        Dense (N, N) matrix whose columns sum to 1

    Raises:
        StochasticityError if the adjacency cannot be normalised
    """
    t = transition_matrix(adjacency)
    n = t.shape[0]
    if method == "auto":
        method = "closed" if n <= cfg.closed_form_max_n else "series"

    if method == "closed":
        system = np.eye(n) - (1.0 - cfg.alpha) * t
        return cfg.alpha * linalg.solve(system, np.eye(n))
    if method != "series":
        raise ValueError(f"unknown diffusion method {method!r}")

    power = np.eye(n)
    diffused = cfg.theta(0) * power
    k = 1
    while cfg.theta(k) >= cfg.truncation_tol:
        power = t @ power
        diffused += cfg.theta(k) * power
        k += 1
    # Tail mass sum_{j>=k} theta_j = (1 - alpha)^k, placed on T^k.
    power = t @ power
    diffused += (1.0 - cfg.alpha) ** k * power
    logger.debug("series diffusion over %d nodes used %d terms", n, k)
    return diffused


def sparsify(diffused: np.ndarray, cfg: DiffusionConfig = DiffusionConfig()) -> SparseGraph:
    """
    Keep each node's strongest diffused neighbours.

    Column j of the diffusion matrix is the walk distribution seeded at j.
    Per column the top_m off-diagonal entries are kept (ties by smaller
    index), entries <= delta are dropped, and the surviving pairs are
    symmetrised by union. An edge {i, j} carries max(A_ij, A_ji).
    """
    diffused = np.asarray(diffused, dtype=np.float64)
    n = diffused.shape[0]
    off = diffused.copy()
    np.fill_diagonal(off, -np.inf)

    kept: Dict[Tuple[int, int], float] = {}
    m = min(cfg.top_m, n - 1)
    for j in range(n):
        order = np.lexsort((np.arange(n), -off[:, j]))[:m]
        for i in order:
            i = int(i)
            if off[i, j] > cfg.delta:
                pair = (min(i, j), max(i, j))
                kept[pair] = float(max(diffused[i, j], diffused[j, i]))
    return undirected_graph(n, kept, GraphKind.LATENT)
