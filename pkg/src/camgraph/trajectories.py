"""Deterministic synthetic camera sets used as fixtures and demos."""
from __future__ import annotations

import numpy as np

from .geometry import CameraPose
from .graph import connectivity, graph_from_edges
from .pairing import PairingParams, select_pairs

KINDS = ("line", "orbit", "grid", "two_cluster")


def _poses(P: np.ndarray, D: np.ndarray) -> list[CameraPose]:
    return [
        CameraPose(k + 1, f"{k + 1:06d}.jpg", tuple(P[k]), tuple(D[k]))
        for k in range(len(P))
    ]


def _jitter_dirs(D: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise <= 0:
        return D
    D = D + rng.normal(scale=noise, size=D.shape)
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def line(n: int, noise: float, rng: np.random.Generator) -> list[CameraPose]:
    """Forward-facing cameras at unit spacing along +x (a driving track)."""
    P = np.zeros((n, 3))
    P[:, 0] = np.arange(n)
    D = np.tile([1.0, 0.0, 0.0], (n, 1))
    if noise > 0:
        P = P + rng.normal(scale=noise, size=P.shape)
    return _poses(P, _jitter_dirs(D, noise, rng))


def orbit(n: int, noise: float, rng: np.random.Generator, radius: float = 10.0) -> list[CameraPose]:
    """Cameras on a horizontal circle looking at its centre."""
    t = 2 * np.pi * np.arange(n) / n
    P = np.stack([radius * np.cos(t), np.zeros(n), radius * np.sin(t)], axis=1)
    if noise > 0:
        P = P + rng.normal(scale=noise, size=P.shape)
    D = -P / np.linalg.norm(P, axis=1, keepdims=True)
    return _poses(P, _jitter_dirs(D, noise, rng))


def grid(n: int, noise: float, rng: np.random.Generator, spacing: float = 1.0, altitude: float = 20.0) -> list[CameraPose]:
    """Downward-facing survey lattice in the x-z plane, serpentine id order."""
    cols = int(np.ceil(np.sqrt(n)))
    pts = []
    for k in range(n):
        r, c = divmod(k, cols)
        if r % 2:
            c = cols - 1 - c
        pts.append((c * spacing, -altitude, r * spacing))
    P = np.array(pts, dtype=np.float64)
    if noise > 0:
        P = P + rng.normal(scale=noise, size=P.shape)
    # OpenCV convention: +y points down
    D = np.tile([0.0, 1.0, 0.0], (n, 1))
    return _poses(P, _jitter_dirs(D, noise, rng))


def disconnects_without_connection(poses: list[CameraPose], params: PairingParams | None = None) -> bool:
    params = params or PairingParams(r=2, h=len(poses) - 3, w=1)
    pairs = select_pairs(poses, params, connection=False)
    count, _ = connectivity(graph_from_edges(len(poses), pairs.pairs))
    return count >= 2


def two_cluster(n: int, noise: float, rng: np.random.Generator, attempts: int = 200) -> list[CameraPose]:
    """Two separated camera groups that the neighbour and ring rules alone leave disconnected.

    Candidates are drawn at random (two Gaussian blobs of random spread and
    separation) until pairing with ``r=2, h=n-3, w=1`` and no sequential pairs
    yields at least two components.
    """
    if n < 6:
        raise ValueError("two_cluster needs n >= 6")
    half = n // 2
    for _ in range(attempts):
        spread = rng.uniform(0.5, 1.5)
        gap = rng.uniform(8.0, 20.0)
        A = rng.normal(scale=spread, size=(half, 3))
        B = rng.normal(scale=spread, size=(n - half, 3)) + [gap, 0.0, 0.0]
        P = np.concatenate([A, B])
        if noise > 0:
            P = P + rng.normal(scale=noise, size=P.shape)
        D = rng.normal(size=(n, 3))
        D /= np.linalg.norm(D, axis=1, keepdims=True)
        poses = _poses(P, D)
        if disconnects_without_connection(poses):
            return poses
    raise RuntimeError(f"no disconnecting configuration found in {attempts} attempts")


def generate_trajectory(kind: str, n: int, noise: float = 0.0, seed: int = 0) -> list[CameraPose]:
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    if kind == "line":
        return line(n, noise, rng)
    if kind == "orbit":
        return orbit(n, noise, rng)
    if kind == "grid":
        return grid(n, noise, rng)
    if kind == "two_cluster":
        return two_cluster(n, noise, rng)
    raise ValueError(f"unknown trajectory kind {kind!r}; expected one of {KINDS}")
