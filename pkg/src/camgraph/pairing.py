"""Concentric nearest-neighbour pairing.

For every camera the other cameras are ranked by distance (rank 1 = nearest,
ties broken by ascending id). A camera is paired with its ``r`` nearest
cameras, with ``w`` of every ``h + w`` cameras further out, and with the
previous camera in id order. The last rule keeps the camera graph connected.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CameraPose, check_pose_ids, pose_arrays

log = logging.getLogger(__name__)

NEIGHBOR = "neighbor"
CONCENTRIC = "concentric"
CONNECTION = "connection"
TAGS = (NEIGHBOR, CONCENTRIC, CONNECTION)


@dataclass(frozen=True)
class PairingParams:
    r: int = 5
    h: int = 20
    w: int = 1

    def __post_init__(self):
        for name in ("r", "h", "w"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.h < 0 or self.w < 0:
            raise ValueError(f"h and w must be >= 0, got h={self.h}, w={self.w}")

    def is_concentric(self, rank: int) -> bool:
        if self.w == 0 or rank <= self.r:
            return False
        return (rank - self.r) % (self.h + self.w) < self.w

    def max_rank(self, n_others: int) -> int:
        """Largest rank <= ``n_others`` that either rule can select."""
        top = min(self.r, n_others)
        if self.w == 0 or n_others <= self.r:
            return top
        period = self.h + self.w
        # last rank s with (s - r) % period < w
        s = n_others
        off = (s - self.r) % period
        if off >= self.w:
            s -= off - (self.w - 1)
        return max(top, s)


@dataclass
class PairSet:
    """Unordered camera-id pairs ``(a, b)`` with ``a < b``, each carrying origin tags."""

    tags: dict[tuple[int, int], set[str]] = field(default_factory=dict)

    def add(self, a: int, b: int, tag: str) -> None:
        if a == b:
            raise ValueError(f"self pair ({a}, {a})")
        if tag not in TAGS:
            raise ValueError(f"unknown tag {tag!r}")
        key = (a, b) if a < b else (b, a)
        self.tags.setdefault(key, set()).add(tag)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.tags)

    def __len__(self) -> int:
        return len(self.tags)

    def __contains__(self, pair) -> bool:
        a, b = pair
        return ((a, b) if a < b else (b, a)) in self.tags

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.pairs)

    def __eq__(self, other) -> bool:
        return isinstance(other, PairSet) and self.tags == other.tags

    def with_tag(self, tag: str) -> list[tuple[int, int]]:
        return [p for p in self.pairs if tag in self.tags[p]]

    def without_tag(self, tag: str) -> "PairSet":
        """Pairs reachable without ``tag``; pairs that only carry ``tag`` are dropped."""
        out = PairSet()
        for p, t in self.tags.items():
            rest = t - {tag}
            if rest:
                out.tags[p] = set(rest)
        return out

    def subset(self, keep: Iterable[tuple[int, int]]) -> "PairSet":
        out = PairSet()
        for p in keep:
            out.tags[p] = set(self.tags[p])
        return out

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        ps = self.pairs
        a = np.fromiter((p[0] for p in ps), dtype=np.int64, count=len(ps))
        b = np.fromiter((p[1] for p in ps), dtype=np.int64, count=len(ps))
        return a, b


class RankIndex:
    """k-d tree over camera centres answering ranked neighbour queries.

    Ranks follow squared Euclidean distance computed in float64, then id, so a
    query agrees with a full sort of all other cameras by ``(distance, id)``.
    """

    def __init__(self, positions: np.ndarray):
        P = np.ascontiguousarray(positions, dtype=np.float64)
        if P.ndim != 2 or P.shape[1] != 3:
            raise ValueError("positions must be (N, 3)")
        if len(P) < 2:
            raise ValueError(f"need at least 2 cameras, got {len(P)}")
        self.positions = P
        self.tree = cKDTree(P)

    @property
    def n(self) -> int:
        return len(self.positions)

    def _exact_row(self, i: int) -> np.ndarray:
        d2 = np.sum((self.positions - self.positions[i]) ** 2, axis=1)
        order = np.lexsort((np.arange(self.n), d2))
        return order[order != i]

    def ranked(self, limit: int, rows: np.ndarray | None = None) -> np.ndarray:
        """0-based indices of the ``limit`` nearest other cameras, per query row.

        Row ``k`` of the result lists cameras at ranks 1..limit from camera
        ``rows[k]``.
        """
        n = self.n
        rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
        limit = int(min(max(limit, 0), n - 1))
        if limit == 0:
            return np.empty((len(rows), 0), dtype=np.int64)
        if limit + 2 > n:
            return np.stack([self._exact_row(i) for i in rows]) if len(rows) else np.empty((0, limit), np.int64)

        # one spare column beyond self + limit to detect a tie straddling the cut
        k = limit + 2
        _, idx = self.tree.query(self.positions[rows], k=k)
        idx = np.asarray(idx, dtype=np.int64).reshape(len(rows), k)
        d2 = np.sum((self.positions[idx] - self.positions[rows][:, None, :]) ** 2, axis=2)
        # the query point itself sorts first: force it there regardless of duplicates
        is_self = idx == rows[:, None]
        d2 = np.where(is_self, -1.0, d2)
        order = np.lexsort((idx, d2), axis=-1)
        idx = np.take_along_axis(idx, order, axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)

        out = idx[:, 1:limit + 1].copy()
        present_self = (idx[:, 0] == rows)
        cut = d2[:, limit]
        nxt = d2[:, limit + 1]
        unsafe = ~present_self | ~(nxt > cut * (1.0 + 1e-9) + 1e-300)
        for k_row in np.flatnonzero(unsafe):
            out[k_row] = self._exact_row(int(rows[k_row]))[:limit]
        return out

    def iter_neighbors(self, i: int, chunk: int = 16) -> Iterator[int]:
        """Yield 0-based indices of other cameras in rank order, fetching lazily."""
        got = 0
        limit = min(chunk, self.n - 1)
        while got < self.n - 1:
            row = self.ranked(limit, rows=np.array([i]))[0]
            yield from (int(j) for j in row[got:])
            got = len(row)
            limit = min(limit * 2, self.n - 1)

    def rank_of(self, i: int, j: int) -> int:
        """1-based rank ``s(i, j)`` of camera ``j`` as seen from camera ``i``."""
        if i == j:
            raise ValueError("rank of a camera relative to itself is undefined")
        return int(np.flatnonzero(self._exact_row(i) == j)[0]) + 1


def build_rank_index(poses: Sequence[CameraPose]) -> RankIndex:
    if len(poses) < 2:
        raise ValueError(f"need at least 2 cameras, got {len(poses)}")
    ids = [p.id for p in poses]
    if len(set(ids)) != len(ids):
        raise ValueError("camera ids must be distinct")
    P, _ = pose_arrays(poses)
    return RankIndex(P)


def select_pairs(
    poses: Sequence[CameraPose],
    params: PairingParams,
    index: RankIndex | None = None,
    connection: bool = True,
) -> PairSet:
    """Build the deduplicated, tagged pair set for ``poses``.

    ``connection=False`` drops the sequential (i-1, i) pairs; it exists only to
    demonstrate that the remaining rules alone can disconnect the graph.
    """
    check_pose_ids(poses)
    index = index or build_rank_index(poses)
    n = len(poses)
    max_rank = params.max_rank(n - 1)
    ranked = index.ranked(max_rank)  # (n, max_rank), 0-based

    ranks = np.arange(1, max_rank + 1)
    neighbor_cols = ranks <= params.r
    if params.w > 0:
        conc_cols = (ranks > params.r) & ((ranks - params.r) % (params.h + params.w) < params.w)
    else:
        conc_cols = np.zeros_like(neighbor_cols)

    out = PairSet()
    src = np.repeat(np.arange(n), max_rank).reshape(n, max_rank)
    for tag, cols in ((NEIGHBOR, neighbor_cols), (CONCENTRIC, conc_cols)):
        a = src[:, cols].ravel()
        b = ranked[:, cols].ravel()
        lo = np.minimum(a, b) + 1
        hi = np.maximum(a, b) + 1
        for key in set(zip(lo.tolist(), hi.tolist())):
            out.tags.setdefault(key, set()).add(tag)
    if connection:
        for i in range(2, n + 1):
            out.add(i - 1, i, CONNECTION)
    log.debug("selected %d pairs for %d cameras (r=%d h=%d w=%d)", len(out), n, params.r, params.h, params.w)
    return out


def pair_count_bound(n: int, params: PairingParams) -> int:
    period = params.h + params.w
    conc = params.w * -(-n // period) if params.w and period else 0
    return n * (params.r + conc + 1)
