"""Weighted camera graph: edge affinities, betweenness node weights, sampling probabilities."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .geometry import CameraPose, check_pose_ids, pose_arrays
from .pairing import PairSet

log = logging.getLogger(__name__)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("CAMGRAPH_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class EdgeWeightParams:
    k: float = 1.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if not 0 < self.epsilon <= 1e-3:
            raise ValueError(f"epsilon must lie in (0, 1e-3], got {self.epsilon}")


def edge_weights(P: np.ndarray, D: np.ndarray, ia, ib, params: EdgeWeightParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``exp(-k |p_a - p_b|) / (1 - exp(-d_a . d_b))``.

    Where the denominator does not exceed ``epsilon`` (relative angle at or
    beyond about 90 degrees) it is replaced by ``epsilon``.
    Returns ``(weights, guarded)``.
    """
    ia = np.asarray(ia)
    ib = np.asarray(ib)
    dist = np.linalg.norm(P[ia] - P[ib], axis=-1)
    dot = np.einsum("...k,...k->...", D[ia], D[ib])
    denom = -np.expm1(-dot)
    guarded = ~(denom > params.epsilon)
    denom = np.where(guarded, params.epsilon, denom)
    return np.exp(-params.k * dist) / denom, guarded


def edge_weight(ci: CameraPose, cj: CameraPose, params: EdgeWeightParams | None = None) -> float:
    params = params or EdgeWeightParams()
    P = np.array([ci.position, cj.position])
    D = np.array([ci.direction, cj.direction])
    w, guarded = edge_weights(P, D, [0], [1], params)
    if guarded[0]:
        log.debug("edge (%d, %d) uses the epsilon-floored denominator", ci.id, cj.id)
    return float(w[0])


@dataclass
class CameraGraph:
    poses: list[CameraPose]
    edges: list[tuple[int, int]]
    edge_weight: dict[tuple[int, int], float] = field(default_factory=dict)
    node_weight: dict[int, float] = field(default_factory=dict)
    sampling_prob: dict[int, float] = field(default_factory=dict)
    guarded_edges: int = 0

    @property
    def ids(self) -> list[int]:
        return [p.id for p in self.poses]

    def weight(self, a: int, b: int) -> float:
        return self.edge_weight[(a, b) if a < b else (b, a)]

    def neighbors(self, i: int) -> list[int]:
        return sorted(self.adjacency.get(i, ()))

    @cached_property
    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {i: set() for i in self.ids}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def csr(self) -> sparse.csr_matrix:
        n = len(self.poses)
        if not self.edges:
            return sparse.csr_matrix((n, n))
        e = np.asarray(self.edges, dtype=np.int64) - 1
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> CameraGraph:
    """Topology-only graph over ids 1..n (poses are placeholders)."""
    poses = [CameraPose(i, f"{i}", (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)) for i in range(1, n + 1)]
    es = sorted({(a, b) if a < b else (b, a) for a, b in edges})
    for a, b in es:
        if a == b or not (1 <= a <= n and 1 <= b <= n):
            raise ValueError(f"bad edge ({a}, {b}) for {n} nodes")
    return CameraGraph(poses, es)


def connectivity(graph: CameraGraph) -> tuple[int, dict[int, int]]:
    """Number of components and a label per node.

    Labels are 0-based and numbered in order of each component's smallest id.
    """
    n = len(graph.poses)
    if n == 0:
        return 0, {}
    count, raw = connected_components(graph.csr(), directed=False)
    remap: dict[int, int] = {}
    labels = {}
    for idx, lab in enumerate(raw):
        labels[idx + 1] = remap.setdefault(int(lab), len(remap))
    return int(count), labels


def _brandes_batch(A: sparse.csr_matrix, sources: np.ndarray) -> np.ndarray:
    """Dependency sums from a batch of BFS sources (ordered source-target pairs)."""
    n = A.shape[0]
    b = len(sources)
    rows = np.arange(b)
    sigma = np.zeros((b, n))
    level = np.full((b, n), -1, dtype=np.int64)
    sigma[rows, sources] = 1.0
    level[rows, sources] = 0
    frontier = np.zeros((b, n))
    frontier[rows, sources] = 1.0
    depth = 0
    while True:
        counts = np.asarray((A @ frontier.T).T)
        new = (counts > 0) & (level < 0)
        if not new.any():
            break
        depth += 1
        level[new] = depth
        sigma[new] = counts[new]
        frontier = np.where(new, sigma, 0.0)

    delta = np.zeros((b, n))
    safe_sigma = np.where(sigma > 0, sigma, 1.0)
    for d in range(depth, 1, -1):
        coeff = np.where(level == d, (1.0 + delta) / safe_sigma, 0.0)
        up = np.asarray((A @ coeff.T).T)
        delta += np.where(level == d - 1, sigma * up, 0.0)
    return delta.sum(axis=0)


def betweenness_node_weights(graph: CameraGraph, batch: int = 128) -> dict[int, float]:
    """Hop-count betweenness summed over unordered endpoint pairs.

    ``w(i) = sum over {j, k}, j != i != k, of sigma_jk(i) / sigma_jk``, computed
    with one breadth-first pass and one dependency back-propagation per source.
    """
    n = len(graph.poses)
    count, _ = connectivity(graph)
    if count > 1:
        raise ValueError(f"betweenness requires a connected graph; found {count} components")
    if n <= 2:
        return {i: 0.0 for i in graph.ids}
    A = graph.csr()
    batches = [np.arange(s, min(s + batch, n)) for s in range(0, n, batch)]
    workers = min(thread_count(), len(batches))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda src: _brandes_batch(A, src), batches))
    else:
        parts = [_brandes_batch(A, src) for src in batches]
    total = np.zeros(n)
    for part in parts:
        total += part
    total /= 2.0
    return {i + 1: float(v) for i, v in enumerate(total)}


def degree_node_weights(graph: CameraGraph) -> dict[int, float]:
    adj = graph.adjacency
    return {i: float(len(adj[i])) for i in graph.ids}


def sampling_probabilities(node_weights: Mapping[int, float], p_min: float = 0.5) -> dict[int, float]:
    """``max(p_min, w / max(w))``; every probability is 1.0 when all weights are zero."""
    if not 0.0 <= p_min < 1.0:
        raise ValueError(f"p_min must lie in [0, 1), got {p_min}")
    if not node_weights:
        return {}
    values = np.array(list(node_weights.values()), dtype=np.float64)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("node weights must be finite and non-negative")
    top = values.max()
    if top <= 0:
        log.warning("all node weights are zero; using uniform sampling probability 1.0")
        return {i: 1.0 for i in node_weights}
    return {i: max(p_min, float(w) / top) for i, w in node_weights.items()}


def target_camera(graph: CameraGraph, i: int) -> int:
    """Neighbour of ``i`` with the largest edge weight; ties go to the lower id."""
    if i not in graph.adjacency:
        raise KeyError(f"unknown node {i}")
    nbrs = graph.neighbors(i)
    if not nbrs:
        raise ValueError(f"isolated node {i}")
    best = nbrs[0]
    best_w = graph.weight(i, best)
    for j in nbrs[1:]:
        w = graph.weight(i, j)
        if w > best_w:
            best, best_w = j, w
    return best


def median_edge_length(P: np.ndarray, edges: Sequence[tuple[int, int]]) -> float:
    if not edges:
        return 1.0
    e = np.asarray(edges, dtype=np.int64) - 1
    lengths = np.linalg.norm(P[e[:, 0]] - P[e[:, 1]], axis=1)
    med = float(np.median(lengths))
    return med if med > 0 else 1.0


def build_camera_graph(
    poses: Sequence[CameraPose],
    pairs: PairSet,
    params: EdgeWeightParams | None = None,
    p_min: float = 0.5,
    centrality: str = "betweenness",
    normalize_scale: bool = False,
) -> CameraGraph:
    """Graph over all cameras with one edge per surviving pair, fully weighted.

    With ``normalize_scale`` positions are divided by the median edge length
    before the distance term is evaluated, so ``k`` is independent of scene units.
    """
    params = params or EdgeWeightParams()
    check_pose_ids(poses)
    n = len(poses)
    for a, b in pairs:
        if not (1 <= a <= n and 1 <= b <= n):
            raise KeyError(f"pair ({a}, {b}) references an unknown camera id")
    g = CameraGraph(list(poses), pairs.pairs)
    P, D = pose_arrays(poses)
    if normalize_scale:
        P = P / median_edge_length(P, g.edges)
    if g.edges:
        e = np.asarray(g.edges, dtype=np.int64) - 1
        w, guarded = edge_weights(P, D, e[:, 0], e[:, 1], params)
        g.edge_weight = {edge: float(x) for edge, x in zip(g.edges, w)}
        g.guarded_edges = int(guarded.sum())
        if g.guarded_edges:
            log.info("%d of %d edges use the epsilon-floored denominator", g.guarded_edges, len(g.edges))
    if centrality == "betweenness":
        g.node_weight = betweenness_node_weights(g)
    elif centrality == "degree":
        g.node_weight = degree_node_weights(g)
    else:
        raise ValueError(f"unknown centrality {centrality!r}")
    g.sampling_prob = sampling_probabilities(g.node_weight, p_min)
    return g


def brute_force_betweenness(n: int, edges: Iterable[tuple[int, int]]) -> dict[int, float]:
    """Reference betweenness that lists every shortest path explicitly.

    For each unordered pair {j, k} all shortest j-k paths are enumerated and
    each interior node is credited ``1 / (number of paths)`` per path it lies
    on. Exponential in the worst case; meant for small graphs.
    """
    adj = {i: set() for i in range(1, n + 1)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)

    def hops(src):
        dist = {src: 0}
        queue = [src]
        for v in queue:
            for u in adj[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist

    dist = {i: hops(i) for i in adj}
    out = {i: 0.0 for i in adj}
    for j in adj:
        for k in adj:
            if k <= j or k not in dist[j]:
                continue
            paths = []
            stack = [[j]]
            while stack:
                path = stack.pop()
                v = path[-1]
                if v == k:
                    paths.append(path)
                    continue
                for u in adj[v]:
                    # stay on a shortest path: each step moves one hop closer to k
                    if dist[k].get(u) == dist[k][v] - 1:
                        stack.append(path + [u])
            for path in paths:
                for i in path[1:-1]:
                    out[i] += 1.0 / len(paths)
    return out


__all__ = [
    "CameraGraph",
    "EdgeWeightParams",
    "betweenness_node_weights",
    "brute_force_betweenness",
    "build_camera_graph",
    "connectivity",
    "degree_node_weights",
    "edge_weight",
    "edge_weights",
    "graph_from_edges",
    "sampling_probabilities",
    "target_camera",
]
