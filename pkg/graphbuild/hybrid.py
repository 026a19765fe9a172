"""
Hybrid Dual Graph

Per bag: cosine distances -> k-NN -> reciprocal gating -> weighted latent
adjacency -> PPR diffusion -> sparsification, plus the spatial k-NN graph.

Graphs are cached as one text file per bag:

    n=<N>
    latent <i> <j> <weight>
    spatial <i> <j> <weight>

with one line per undirected edge (i < j).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from bagio import Bag

from .diffusion import ppr_diffuse, sparsify
from .models import DiffusionConfig, GraphCacheError, GraphKind, SparseGraph, WeightMode
from .neighbors import knn, pairwise_cosine_distance, reciprocal_knn, spatial_knn, undirected_graph

logger = logging.getLogger(__name__)

CACHE_SUFFIX = ".graph"


@dataclass
class HybridGraph:
    """
    The two graphs of one bag.

    Unpacks as (latent, spatial). `initial` is the reciprocal k-NN graph
    before diffusion; it is kept for plotting and not cached.
    """
    latent: SparseGraph
    spatial: SparseGraph
    initial: Optional[SparseGraph] = None

    def __iter__(self) -> Iterator[SparseGraph]:
        yield self.latent
        yield self.spatial

    @property
    def n(self) -> int:
        return self.latent.n


def latent_adjacency(features: np.ndarray, cfg: DiffusionConfig) -> Tuple[SparseGraph, np.ndarray]:
    """
    Reciprocal k-NN graph in feature space.

    Edge weights are cosine similarity clipped at 0, or the raw cosine
    distance when cfg.weight_mode is DISTANCE.

    Returns:
        (initial graph, dense weighted adjacency)
    """
    n = features.shape[0]
    if n < 2:
        return SparseGraph.empty(n, GraphKind.LATENT), np.zeros((n, n))
    distances = pairwise_cosine_distance(features)
    gated = reciprocal_knn(knn(distances, min(cfg.k_latent, n - 1)))

    if cfg.weight_mode is WeightMode.DISTANCE:
        weights = distances
    else:
        weights = np.clip(1.0 - distances, 0.0, None)
    edges: Dict[Tuple[int, int], float] = {
        (i, j): float(weights[i, j]) for i, row in enumerate(gated) for j in row if i < j
    }
    initial = undirected_graph(n, edges, GraphKind.LATENT)
    return initial, initial.to_dense()


def build_hybrid_graph(bag: Bag, cfg: DiffusionConfig = DiffusionConfig()) -> HybridGraph:
    """
    Construct the diffused latent graph and the spatial graph of a bag.

    Neighbour counts are clamped to N - 1 for small bags; a single-patch bag
    gets two empty graphs.
    """
    initial, adjacency = latent_adjacency(bag.features, cfg)
    if bag.num_patches < 2:
        latent = SparseGraph.empty(bag.num_patches, GraphKind.LATENT)
    else:
        latent = sparsify(ppr_diffuse(adjacency, cfg), cfg)
    spatial = spatial_knn(bag.coords, cfg.k_spatial)
    logger.debug(
        "%s: %d patches, %d latent edges (%d before diffusion), %d spatial edges",
        bag.bag_id, bag.num_patches, latent.num_edges, initial.num_edges, spatial.num_edges,
    )
    return HybridGraph(latent, spatial, initial)


# =============================================================================
# CACHE
# =============================================================================

def cache_path(cache_dir: Path, bag_id: str) -> Path:
    return Path(cache_dir) / f"{bag_id}{CACHE_SUFFIX}"


def write_graph_cache(graph: HybridGraph, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"n={graph.n}"]
    for sparse in graph:
        for i, j, w in sparse.edges():
            if i < j:
                lines.append(f"{sparse.kind.value} {i} {j} {w:.17g}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_graph_cache(path: Path) -> HybridGraph:
    """
    Raises:
        GraphCacheError if the file is missing or any line is malformed
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise GraphCacheError(f"{path}: graph cache not found") from exc
    if not lines or not lines[0].startswith("n="):
        raise GraphCacheError(f"{path}: missing n=<N> header")
    try:
        n = int(lines[0][2:])
    except ValueError as exc:
        raise GraphCacheError(f"{path}: bad header {lines[0]!r}") from exc

    edges: Dict[GraphKind, Dict[Tuple[int, int], float]] = {kind: {} for kind in GraphKind}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            kind = GraphKind(parts[0])
            i, j, w = int(parts[1]), int(parts[2]), float(parts[3])
        except (ValueError, IndexError) as exc:
            raise GraphCacheError(f"{path}:{lineno}: malformed edge line {line!r}") from exc
        edges[kind][(min(i, j), max(i, j))] = w

    try:
        latent = undirected_graph(n, edges[GraphKind.LATENT], GraphKind.LATENT)
        spatial = undirected_graph(n, edges[GraphKind.SPATIAL], GraphKind.SPATIAL)
    except ValueError as exc:
        raise GraphCacheError(f"{path}: {exc}") from exc
    return HybridGraph(latent, spatial)


def _build_and_write(bag: Bag, cache_dir: Path, cfg: DiffusionConfig) -> Path:
    return write_graph_cache(build_hybrid_graph(bag, cfg), cache_path(cache_dir, bag.bag_id))


def build_graph_cache(
    bags: Sequence[Bag],
    cache_dir: Path,
    cfg: DiffusionConfig = DiffusionConfig(),
    jobs: int = 1,
) -> List[Path]:
    """Build and cache the hybrid graph of every bag, in parallel across bags."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    paths = Parallel(n_jobs=jobs)(delayed(_build_and_write)(bag, cache_dir, cfg) for bag in bags)
    logger.info("Cached %d bag graphs in %s", len(paths), cache_dir)
    return list(paths)


def load_graph(bag: Bag, cache_dir: Optional[Path], cfg: DiffusionConfig = DiffusionConfig()) -> HybridGraph:
    """Cached graph of a bag when available, otherwise built on the fly."""
    if cache_dir is not None:
        path = cache_path(cache_dir, bag.bag_id)
        if path.is_file():
            graph = read_graph_cache(path)
            if graph.n != bag.num_patches:
                raise GraphCacheError(f"{path}: cached n={graph.n}, bag has {bag.num_patches} patches")
            return graph
        logger.warning("No cached graph for %s in %s; building it", bag.bag_id, cache_dir)
    return build_hybrid_graph(bag, cfg)
