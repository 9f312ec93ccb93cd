"""Octree over an initial point cloud with count-based leaf pruning.

A leaf's level of detail is its point count. Leaves holding fewer than
``tau`` points are dropped; optionally the survivors are subsampled to a
global budget with per-leaf quotas proportional to leaf counts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OctreeParams:
    max_depth: int = 10
    leaf_capacity: int = 32
    tau: int = 1
    target_count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.leaf_capacity < 1:
            raise ValueError(f"leaf_capacity must be >= 1, got {self.leaf_capacity}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.target_count is not None and self.target_count < 0:
            raise ValueError(f"target_count must be >= 0, got {self.target_count}")


@dataclass
class Node:
    center: np.ndarray
    half: float
    depth: int
    children: dict[int, "Node"] = field(default_factory=dict)
    indices: np.ndarray | None = None  # set on leaves only

    @property
    def is_leaf(self) -> bool:
        return self.indices is not None

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = self.center - self.half
        hi = self.center + self.half
        return np.all((pts >= lo) & (pts <= hi), axis=-1)


@dataclass
class OctreePointCloud:
    points: np.ndarray
    root: Node
    leaves: list[Node]

    @property
    def bounds(self) -> tuple[np.ndarray, float]:
        return self.root.center.copy(), self.root.half

    def leaf_counts(self) -> np.ndarray:
        return np.array([len(leaf.indices) for leaf in self.leaves], dtype=np.int64)

    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves)


def root_cube(points: np.ndarray, margin: float = 1e-6) -> tuple[np.ndarray, float]:
    """Cube around the tight bounding box, inflated by a relative margin."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    center = (lo + hi) / 2.0
    half = float((hi - lo).max()) / 2.0
    half = half * (1.0 + margin) + margin * max(1.0, float(np.abs(center).max()))
    return center, half


def child_codes(pts: np.ndarray, center: np.ndarray) -> np.ndarray:
    # points on a split plane go to the lower-index child
    above = pts > center
    return above[:, 0] * 4 + above[:, 1] * 2 + above[:, 2] * 1


def build_octree(points, params: OctreeParams | None = None, bounds: tuple[np.ndarray, float] | None = None) -> OctreePointCloud:
    """Split any node holding more than ``leaf_capacity`` points, up to ``max_depth``.

    ``bounds`` (center, half-size) overrides the root cube; it must contain
    every point.
    """
    params = params or OctreeParams()
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 3:
        raise ValueError("points must be an (N, 3+) array")
    pts = pts[:, :3]
    if len(pts) == 0:
        raise ValueError("cannot build an octree from zero points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite coordinates")

    if bounds is None:
        center, half = root_cube(pts)
    else:
        center, half = np.asarray(bounds[0], dtype=np.float64), float(bounds[1])
    root = Node(center, half, 0)
    if not np.all(root.contains(pts)):
        raise ValueError("root bounds do not contain every point")

    leaves: list[Node] = []
    stack = [(root, np.arange(len(pts)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) <= params.leaf_capacity or node.depth >= params.max_depth:
            node.indices = idx
            leaves.append(node)
            continue
        codes = child_codes(pts[idx], node.center)
        order = np.argsort(codes, kind="stable")
        idx, codes = idx[order], codes[order]
        splits = np.flatnonzero(np.diff(codes)) + 1
        groups = np.split(idx, splits)
        child_ids = codes[np.concatenate([[0], splits])]
        h = node.half / 2.0
        pending = []
        for code, members in zip(child_ids.tolist(), groups):
            offset = np.array([(code >> 2) & 1, (code >> 1) & 1, code & 1]) * 2.0 - 1.0
            child = Node(node.center + offset * h, h, node.depth + 1)
            node.children[code] = child
            pending.append((child, members))
        # reversed so leaves come out in ascending child-code order
        stack.extend(reversed(pending))
    return OctreePointCloud(pts, root, leaves)


def _largest_remainder(counts: np.ndarray, total: int, rng: np.random.Generator) -> np.ndarray:
    exact = counts * (total / counts.sum())
    quota = np.floor(exact).astype(np.int64)
    quota = np.minimum(quota, counts)
    short = total - int(quota.sum())
    if short > 0:
        rem = exact - quota
        # random key breaks equal remainders reproducibly
        order = np.lexsort((rng.random(len(counts)), -rem))
        order = order[quota[order] < counts[order]]
        quota[order[:short]] += 1
    return quota


def _tau_quotas(counts: np.ndarray, total: int, tau: int, rng: np.random.Generator) -> np.ndarray:
    """Largest-remainder quotas where each leaf keeps either 0 or at least ``tau`` points.

    Leaves whose share would fall below ``tau`` are dropped and their share is
    spread over the rest, so re-pruning the output with the same bounds keeps
    every point.
    """
    active = np.ones(len(counts), dtype=bool)
    quota = np.zeros(len(counts), dtype=np.int64)
    while active.any():
        want = min(total, int(counts[active].sum()))
        quota[:] = 0
        quota[active] = _largest_remainder(counts[active], want, rng)
        thin = active & (quota > 0) & (quota < tau)
        if not thin.any():
            return quota
        # drop the thinnest leaves first, one share level at a time
        active &= ~(thin & (quota == quota[thin].min()))
    return quota


def prune(tree: OctreePointCloud, params: OctreeParams | None = None) -> np.ndarray:
    """Row indices into ``tree.points`` that survive, in ascending order.

    Leaves with fewer than ``tau`` points are dropped. With ``target_count``
    set, surviving leaves are subsampled uniformly to exactly that many
    points; if fewer survive, all survivors are returned with a warning.
    """
    params = params or OctreeParams()
    keep = [leaf for leaf in tree.leaves if len(leaf.indices) >= params.tau]
    if not keep:
        return np.empty(0, dtype=np.int64)
    surviving = np.concatenate([leaf.indices for leaf in keep])
    target = params.target_count
    if target is None:
        return np.sort(surviving)
    if target > len(surviving):
        log.warning("target_count %d exceeds the %d surviving points; keeping all", target, len(surviving))
        return np.sort(surviving)

    rng = np.random.default_rng(params.seed)
    counts = np.array([len(leaf.indices) for leaf in keep], dtype=np.int64)
    quota = _tau_quotas(counts, target, params.tau, rng)
    if quota.sum() < target:
        log.warning("only %d points fit the tau rule under target_count %d", quota.sum(), target)
    picked = [
        leaf.indices if q == len(leaf.indices) else rng.choice(leaf.indices, size=q, replace=False)
        for leaf, q in zip(keep, quota.tolist())
        if q > 0
    ]
    if not picked:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(picked))


def prune_points(points, params: OctreeParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Build, prune and return ``(kept_points, kept_indices)``."""
    params = params or OctreeParams()
    pts = np.asarray(points)
    tree = build_octree(pts, params)
    idx = prune(tree, params)
    return pts[idx], idx
