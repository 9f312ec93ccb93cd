import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camgraph.geometry import CameraPose
from camgraph.graph import (
    EdgeWeightParams,
    CameraGraph,
    betweenness_node_weights,
    brute_force_betweenness,
    build_camera_graph,
    connectivity,
    degree_node_weights,
    edge_weight,
    graph_from_edges,
    sampling_probabilities,
    target_camera,
)
from camgraph.pairing import NEIGHBOR, PairingParams, PairSet, select_pairs
from camgraph.validation import random_connected_edges

from conftest import random_poses


def cam(p, d, i=1):
    return CameraPose(i, str(i), p, d)


def weighted_graph(weights):
    """Star around node 1 whose spokes carry the given weights."""
    n = max(weights) if weights else 1
    g = graph_from_edges(n, [(1, j) for j in weights])
    g.edge_weight = {(1, j): w for j, w in weights.items()}
    return g


def test_edge_weight_identical_cameras():
    c = cam((1, 2, 3), (0, 0, 1))
    assert edge_weight(c, c) == pytest.approx(1 / (1 - math.exp(-1)))
    assert edge_weight(c, c) == pytest.approx(1.5820, abs=1e-4)


def test_edge_weight_guarded_when_orthogonal():
    a, b = cam((0, 0, 0), (0, 0, 1)), cam((0, 0, 2), (1, 0, 0), 2)
    params = EdgeWeightParams(k=1.0, epsilon=1e-6)
    assert edge_weight(a, b, params) == pytest.approx(math.exp(-2) / 1e-6)
    poses = [a, b]
    ps = PairSet()
    ps.add(1, 2, NEIGHBOR)
    assert build_camera_graph(poses, ps, params).guarded_edges == 1


@given(st.floats(0.01, 50), st.floats(0.1, 5))
def test_edge_weight_decreases_with_distance(dist, k):
    params = EdgeWeightParams(k=k)
    d = (0.2, 0.1, 1.0)
    a = cam((0, 0, 0), d)
    near, far = cam((dist, 0, 0), d, 2), cam((2 * dist, 0, 0), d, 2)
    w_near, w_far = edge_weight(a, near, params), edge_weight(a, far, params)
    assert w_far < w_near or w_far == w_near == 0.0


@pytest.mark.parametrize("kw", [dict(k=0), dict(epsilon=0), dict(epsilon=1e-2)])
def test_edge_params_validated(kw):
    with pytest.raises(ValueError):
        EdgeWeightParams(**kw)


def test_target_camera_examples():
    assert target_camera(weighted_graph({2: 0.5, 5: 2.0, 9: 1.0}), 1) == 5
    assert target_camera(weighted_graph({4: 0.1}), 1) == 4
    assert target_camera(weighted_graph({3: 1.0, 7: 1.0}), 1) == 3
    with pytest.raises(ValueError):
        target_camera(weighted_graph({3: 1.0}), 2)


def test_betweenness_closed_forms():
    assert betweenness_node_weights(graph_from_edges(3, [(1, 2), (2, 3)])) == {1: 0, 2: 1, 3: 0}
    star = betweenness_node_weights(graph_from_edges(5, [(1, j) for j in range(2, 6)]))
    assert star == {1: 6, 2: 0, 3: 0, 4: 0, 5: 0}
    cycle = betweenness_node_weights(graph_from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)]))
    assert all(v == pytest.approx(0.5) for v in cycle.values())


@pytest.mark.parametrize("length", [2, 3, 6, 15])
def test_path_interior_weights(length):
    w = betweenness_node_weights(graph_from_edges(length, [(i, i + 1) for i in range(1, length)]))
    # node i separates (i-1) nodes from (length-i) nodes
    assert w == {i: pytest.approx((i - 1) * (length - i)) for i in range(1, length + 1)}


def test_complete_graph_has_zero_betweenness():
    edges = [(a, b) for a in range(1, 7) for b in range(a + 1, 7)]
    w = betweenness_node_weights(graph_from_edges(6, edges))
    assert all(v == 0 for v in w.values())
    assert set(sampling_probabilities(w).values()) == {1.0}


def test_disconnected_graph_rejected():
    with pytest.raises(ValueError):
        betweenness_node_weights(graph_from_edges(4, [(1, 2), (3, 4)]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12))
def test_betweenness_matches_oracle(seed, n):
    rng = np.random.default_rng(seed)
    edges = random_connected_edges(rng, n, float(rng.uniform(0, 0.6)))
    fast = betweenness_node_weights(graph_from_edges(n, edges), batch=int(rng.integers(1, 5)))
    ref = brute_force_betweenness(n, edges)
    assert fast.keys() == ref.keys()
    assert all(abs(fast[i] - ref[i]) <= 1e-9 for i in ref)


def test_batched_betweenness_independent_of_batch_size():
    rng = np.random.default_rng(0)
    edges = random_connected_edges(rng, 150, 0.03)
    g = graph_from_edges(150, edges)
    a = betweenness_node_weights(g, batch=7)
    b = betweenness_node_weights(g, batch=256)
    assert all(abs(a[i] - b[i]) < 1e-9 for i in a)


def test_sampling_examples():
    path = betweenness_node_weights(graph_from_edges(3, [(1, 2), (2, 3)]))
    assert sampling_probabilities(path, 0.5) == {1: 0.5, 2: 1.0, 3: 0.5}
    assert sampling_probabilities({1: 10, 2: 5, 3: 0}, 0.5) == {1: 1.0, 2: 0.5, 3: 0.5}
    assert sampling_probabilities({1: 3, 2: 3}) == {1: 1.0, 2: 1.0}
    assert sampling_probabilities({1: 0, 2: 0}) == {1: 1.0, 2: 1.0}
    with pytest.raises(ValueError):
        sampling_probabilities({1: -1.0})


@given(
    st.dictionaries(st.integers(1, 50), st.floats(0, 1e6), min_size=1, max_size=30),
    st.floats(1e-3, 1e3),
)
def test_sampling_range_and_scale_invariance(weights, s):
    p = sampling_probabilities(weights)
    assert all(0.5 <= v <= 1.0 for v in p.values())
    if max(weights.values()) > 0:
        top = max(weights, key=weights.get)
        assert p[top] == 1.0
        scaled = sampling_probabilities({i: w * s for i, w in weights.items()})
        assert all(scaled[i] == pytest.approx(p[i], rel=1e-12) for i in p)


def test_connectivity_examples():
    n = 7
    assert connectivity(graph_from_edges(n, [(i, i + 1) for i in range(1, n)]))[0] == 1
    count, labels = connectivity(graph_from_edges(n, []))
    assert count == n and labels == {i: i - 1 for i in range(1, n + 1)}
    count, labels = connectivity(graph_from_edges(5, [(4, 5), (1, 3)]))
    assert count == 3 and labels == {1: 0, 2: 1, 3: 0, 4: 2, 5: 2}


def test_build_camera_graph_end_to_end():
    poses = random_poses(60, 3)
    pairs = select_pairs(poses, PairingParams())
    g = build_camera_graph(poses, pairs)
    assert len(g.edge_weight) == len(pairs) and all(w > 0 for w in g.edge_weight.values())
    assert max(g.sampling_prob.values()) == 1.0
    assert min(g.sampling_prob.values()) >= 0.5
    deg = build_camera_graph(poses, pairs, centrality="degree")
    assert deg.node_weight == degree_node_weights(g)
    with pytest.raises(ValueError):
        build_camera_graph(poses, pairs, centrality="pagerank")


def test_normalize_scale_makes_weights_unit_free():
    poses = random_poses(40, 8)
    big = [CameraPose(p.id, p.name, tuple(1000 * np.array(p.position)), p.direction) for p in poses]
    pairs = select_pairs(poses, PairingParams(r=3, h=4, w=1))
    a = build_camera_graph(poses, pairs, normalize_scale=True)
    b = build_camera_graph(big, pairs, normalize_scale=True)
    assert all(a.edge_weight[e] == pytest.approx(b.edge_weight[e], rel=1e-9) for e in a.edges)


def test_graph_is_dataclass_with_weights():
    g = graph_from_edges(2, [(2, 1)])
    assert isinstance(g, CameraGraph) and g.edges == [(1, 2)]
    assert g.neighbors(1) == [2]
