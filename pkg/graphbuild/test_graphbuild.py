"""Tests for neighbour search, PPR diffusion, sparsification and the graph cache."""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from bagio import Bag, SynthSpec, generate_synthetic_dataset
from graphbuild import (
    DiffusionConfig,
    GraphCacheError,
    GraphKind,
    NeighborCountError,
    SparseGraph,
    StochasticityError,
    WeightMode,
    ZeroVectorError,
    build_graph_cache,
    build_hybrid_graph,
    cache_path,
    cosine_distance,
    knn,
    latent_adjacency,
    load_graph,
    ppr_diffuse,
    read_graph_cache,
    reciprocal_knn,
    sparsify,
    spatial_knn,
    transition_matrix,
    write_graph_cache,
)
from graphbuild.visualize import draw_latent_refinement, to_networkx


def brute_knn(dist, k):
    n = len(dist)
    out = []
    for i in range(n):
        others = sorted((dist[i][j], j) for j in range(n) if j != i)
        out.append({j for _, j in others[:k]})
    return out


def random_adjacency(rng, n, density=0.2):
    upper = np.triu(rng.uniform(0.1, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < density), 1)
    return upper + upper.T


# ============================================================================
# NEIGHBOURS
# ============================================================================

def test_cosine_distance_values():
    assert cosine_distance([3.0, 4.0], [3.0, 4.0]) == pytest.approx(0.0, abs=1e-12)
    assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)


def test_cosine_distance_zero_vector():
    with pytest.raises(ZeroVectorError):
        cosine_distance([0.0, 0.0], [1.0, 0.0])


def test_knn_collinear_points():
    x = np.array([0.0, 1.0, 10.0])
    neighbors = knn(np.abs(x[:, None] - x[None, :]), 1)
    assert [set(row.tolist()) for row in neighbors] == [{1}, {0}, {1}]


def test_knn_full_and_too_large():
    dist = cdist(np.arange(5.0)[:, None], np.arange(5.0)[:, None])
    neighbors = knn(dist, 4)
    for i, row in enumerate(neighbors):
        assert set(row.tolist()) == set(range(5)) - {i}
    with pytest.raises(NeighborCountError):
        knn(dist, 5)


def test_knn_matches_brute_force(rng):
    for _ in range(50):
        points = rng.normal(size=(40, 3))
        dist = cdist(points, points)
        k = int(rng.integers(1, 12))
        assert [set(row.tolist()) for row in knn(dist, k)] == brute_knn(dist, k)


def test_knn_ties_prefer_smaller_index():
    dist = np.ones((4, 4)) - np.eye(4)
    assert knn(dist, 2)[3].tolist() == [0, 1]


def test_reciprocal_asymmetric_layout():
    x = np.array([0.0, 2.0, 3.0, 10.0, 10.5])
    neighbors = knn(np.abs(x[:, None] - x[None, :]), 1)
    recip = reciprocal_knn(neighbors)
    assert recip == [set(), {2}, {1}, {4}, {3}]
    for i, r in enumerate(recip):
        assert r <= set(neighbors[i].tolist())
        assert all(i in recip[j] for j in r)


def test_grid_interior_has_eight_neighbourhood():
    coords = np.array([(s, t) for s in range(5) for t in range(5)], dtype=float)
    center = 12
    found = set(knn(cdist(coords, coords), 8)[center].tolist())
    expected = {s * 5 + t for s in (1, 2, 3) for t in (1, 2, 3)} - {center}
    assert found == expected


def test_spatial_graph_matches_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(9, 80))
        cells = rng.choice(225, size=n, replace=False)
        coords = np.stack([cells // 15, cells % 15], axis=1)
        graph = spatial_knn(coords, 8)
        oracle = brute_knn(cdist(coords, coords), 8)
        expected = {(min(i, j), max(i, j)) for i, row in enumerate(oracle) for j in row}
        assert graph.edge_set() == expected
        assert np.all(graph.weight == 1.0)
        assert graph.num_edges <= 8 * n


def test_spatial_small_bags():
    assert spatial_knn(np.array([[0, 0]]), 8).num_edges == 0
    pair = spatial_knn(np.array([[0, 0], [5, 5]]), 8)
    assert pair.edge_set() == {(0, 1)}


def test_sparse_graph_rejects_self_loops():
    with pytest.raises(ValueError):
        SparseGraph(2, [0], [0], [1.0], GraphKind.LATENT)


def test_sparse_graph_neighbour_order():
    dense = np.array([[0, 0.2, 0.9], [0.2, 0, 0.0], [0.9, 0, 0]])
    graph = SparseGraph.from_dense(dense, GraphKind.LATENT)
    assert graph.neighbors(0).tolist() == [2, 1]


# ============================================================================
# DIFFUSION
# ============================================================================

def test_theta_coefficients():
    cfg = DiffusionConfig()
    assert cfg.theta(0) == pytest.approx(0.25)
    assert cfg.theta(1) == pytest.approx(0.1875)


def test_single_node_self_loop_diffuses_to_one():
    for method in ("series", "closed"):
        diffused = ppr_diffuse(np.array([[1.0]]), DiffusionConfig(truncation_tol=1e-12), method=method)
        assert diffused[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_series_matches_closed_form(rng):
    cfg = DiffusionConfig(truncation_tol=1e-12)
    for _ in range(20):
        adjacency = random_adjacency(rng, 50)
        series = ppr_diffuse(adjacency, cfg, method="series")
        closed = ppr_diffuse(adjacency, cfg, method="closed")
        assert np.max(np.abs(series - closed)) <= 1e-8


def test_series_columns_sum_to_one_at_default_tolerance(rng):
    cfg = DiffusionConfig()
    adjacency = random_adjacency(rng, cfg.closed_form_max_n + 88, density=0.02)
    adjacency[:, 3] = adjacency[3, :] = 0.0
    diffused = ppr_diffuse(adjacency, cfg)
    assert np.max(np.abs(diffused.sum(axis=0) - 1.0)) <= 1e-9
    assert np.all(diffused >= 0.0)
    closed = ppr_diffuse(adjacency, cfg, method="closed")
    assert np.max(np.abs(diffused - closed)) <= 1e-5


def test_transition_and_diffusion_are_column_stochastic(rng):
    adjacency = random_adjacency(rng, 30)
    adjacency[:, 7] = adjacency[7, :] = 0.0
    t = transition_matrix(adjacency)
    assert np.allclose(t.sum(axis=0), 1.0, atol=1e-12)
    assert t[7, 7] == 1.0
    diffused = ppr_diffuse(adjacency, method="closed")
    assert np.allclose(diffused.sum(axis=0), 1.0, atol=1e-9)


def test_large_alpha_is_near_identity(rng):
    diffused = ppr_diffuse(random_adjacency(rng, 20, 0.5), DiffusionConfig(alpha=0.999), method="closed")
    off = diffused - np.diag(np.diag(diffused))
    assert off.sum(axis=0).max() < 2e-3


def test_non_stochastic_input_rejected():
    with pytest.raises(StochasticityError):
        transition_matrix(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(StochasticityError):
        transition_matrix(np.array([[0.0, np.nan], [1.0, 0.0]]))


def test_invalid_alpha():
    with pytest.raises(ValueError):
        DiffusionConfig(alpha=1.0)


# ============================================================================
# SPARSIFY
# ============================================================================

def test_sparsify_below_threshold_is_empty():
    assert sparsify(np.full((6, 6), 0.01)).num_edges == 0


def test_sparsify_keeps_top_five():
    diffused = np.zeros((10, 10))
    diffused[1:, 0] = np.arange(1, 10) / 10.0
    graph = sparsify(diffused, DiffusionConfig(top_m=5))
    assert graph.edge_set() == {(0, j) for j in range(5, 10)}


def test_sparsify_threshold_is_strict():
    diffused = np.array([[0.5, 0.02], [0.02, 0.5]])
    assert sparsify(diffused, DiffusionConfig(delta=0.02)).num_edges == 0
    assert sparsify(diffused + np.array([[0, 1e-9], [0, 0]]), DiffusionConfig(delta=0.02)).edge_set() == {(0, 1)}


def test_sparsify_is_idempotent(rng):
    diffused = ppr_diffuse(random_adjacency(rng, 40, 0.3))
    graph = sparsify(diffused)
    support = graph.to_dense() > 0
    masked = np.where(support, diffused, 0.0)
    assert sparsify(masked) == graph
    dense = diffused.copy()
    for i, j, _ in graph.edges():
        assert dense[i, j] > 0.02 or dense[j, i] > 0.02


# ============================================================================
# HYBRID GRAPH
# ============================================================================

def two_cluster_bag(rng, n=40, d_f=16):
    means = np.zeros((2, d_f))
    means[0, 0] = means[1, 1] = 1.0
    membership = np.arange(n) % 2
    features = means[membership] + 0.1 * rng.normal(size=(n, d_f))
    cells = rng.choice(100, size=n, replace=False)
    bag = Bag("clusters", 1, np.stack([cells // 10, cells % 10], axis=1), features.astype(np.float32))
    return bag, membership


def test_identical_features_fully_connected():
    bag = Bag("same", 0, np.array([[0, 0], [0, 1], [1, 0]]), np.ones((3, 4), dtype=np.float32))
    latent, spatial = build_hybrid_graph(bag)
    assert latent.edge_set() == {(0, 1), (0, 2), (1, 2)}
    assert spatial.edge_set() == {(0, 1), (0, 2), (1, 2)}


def test_two_clusters_stay_apart(rng):
    bag, membership = two_cluster_bag(rng)
    latent, _ = build_hybrid_graph(bag)
    edges = latent.edge_set()
    intra = sum(membership[i] == membership[j] for i, j in edges)
    assert edges and intra / len(edges) >= 0.9


def test_construction_bounds_and_gating(rng):
    bags = generate_synthetic_dataset(SynthSpec(class_counts=(2, 2, 2, 2), feature_dim=8), seed=3)
    cfg = DiffusionConfig()
    for bag in bags:
        graph = build_hybrid_graph(bag, cfg)
        n = bag.num_patches
        assert graph.spatial.num_edges <= 8 * n
        assert graph.latent.num_edges <= cfg.top_m * n
        neighbors = knn(_cos_dist(bag.features.astype(np.float64)), min(8, n - 1))
        knn_edges = {(min(i, int(j)), max(i, int(j))) for i, row in enumerate(neighbors) for j in row}
        assert graph.initial.edge_set() <= knn_edges


def _cos_dist(features):
    unit = features / np.linalg.norm(features, axis=1, keepdims=True)
    return np.clip(1.0 - unit @ unit.T, 0.0, 2.0)


def test_distance_weight_mode(rng):
    bag, _ = two_cluster_bag(rng, n=12)
    initial, _ = latent_adjacency(bag.features, DiffusionConfig(weight_mode=WeightMode.DISTANCE))
    dist = _cos_dist(bag.features.astype(np.float64))
    for i, j, w in initial.edges():
        assert w == pytest.approx(dist[i, j], abs=1e-9)


def test_single_patch_bag_has_no_edges():
    bag = Bag("one", 0, np.array([[0, 0]]), np.ones((1, 3), dtype=np.float32))
    latent, spatial = build_hybrid_graph(bag)
    assert latent.num_edges == spatial.num_edges == 0


# ============================================================================
# CACHE AND FIGURE
# ============================================================================

def test_cache_round_trip(tmp_path, tiny_bag):
    graph = build_hybrid_graph(tiny_bag)
    loaded = read_graph_cache(write_graph_cache(graph, tmp_path / "tiny.graph"))
    assert loaded.latent == graph.latent
    assert loaded.spatial == graph.spatial


def test_cache_errors(tmp_path, tiny_bag):
    with pytest.raises(GraphCacheError):
        read_graph_cache(tmp_path / "missing.graph")
    bad = tmp_path / "bad.graph"
    bad.write_text("n=3\nlatent 0 x 0.5\n", encoding="utf-8")
    with pytest.raises(GraphCacheError):
        read_graph_cache(bad)
    write_graph_cache(build_hybrid_graph(tiny_bag), cache_path(tmp_path, tiny_bag.bag_id))
    other = Bag(tiny_bag.bag_id, 0, tiny_bag.coords[:5], tiny_bag.features[:5])
    with pytest.raises(GraphCacheError):
        load_graph(other, tmp_path)


def test_build_graph_cache(tmp_path, small_spec):
    bags = generate_synthetic_dataset(small_spec, seed=0)[:4]
    paths = build_graph_cache(bags, tmp_path, jobs=1)
    assert [p.name for p in paths] == [f"{b.bag_id}.graph" for b in bags]
    for bag in bags:
        assert load_graph(bag, tmp_path).latent == build_hybrid_graph(bag).latent


def test_latent_figure(tmp_path, rng):
    bag, _ = two_cluster_bag(rng, n=20)
    graph = build_hybrid_graph(bag)
    out = draw_latent_refinement(bag, graph, tmp_path / "latent.png")
    assert out.is_file() and out.stat().st_size > 0
    similarity = 1.0 - _cos_dist(bag.features.astype(np.float64))
    nxg = to_networkx(graph.latent, similarity, 0.5)
    assert all(similarity[i, j] >= 0.5 for i, j in nxg.edges())
